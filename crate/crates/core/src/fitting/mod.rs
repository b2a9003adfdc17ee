//! Maximum-likelihood fitting of [`FitParams`] to behavioural data.
//!
//! Parameters are optimized in unconstrained coordinates: logits for the
//! binary rule probabilities, α and β, a softmax (last free branch pinned at
//! zero) for the `SET` branches, and `T = 10^(3·tanh v)` for temperatures, so
//! every decoded point satisfies the constraints exactly.

mod data;
mod optim;
mod synth;

pub use data::{
    prepare_classification, prepare_generation, read_classification_csv, read_generation_csv,
    write_classification_csv, write_generation_csv, ClassificationRecord, ClsTrialData, GenTrialData,
    GenerationRecord,
};
pub use optim::{fd_gradient, minimize, OptimOptions, OptimResult};
pub use synth::{synthesize_classification, synthesize_generation};

use crate::grammar::{GrammarError, Lesions, SetRule, Theta};
use crate::inference::{FitParams, InferenceError};
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, thiserror::Error)]
pub enum FitError {
    #[error("constraint violated: {0}")]
    ConstraintViolation(String),
    #[error("no start converged")]
    NonConvergence,
    #[error("unknown trial {0}")]
    UnknownTrial(String),
    #[error("trial {trial}: {source}")]
    Token { trial: String, source: crate::token::TokenError },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error(transparent)]
    Grammar(#[from] GrammarError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Classify,
    Generate,
}

/// Which parameters are free; the rest stay at `base`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamSpace {
    pub base: FitParams,
    pub lesions: Lesions,
    pub theta: bool,
    pub alpha: bool,
    pub beta: bool,
    pub temperatures: bool,
}

pub const T_RANGE_DECADES: f64 = 3.0;

fn logit(p: f64) -> f64 {
    let p = p.clamp(1e-12, 1.0 - 1e-12);
    (p / (1.0 - p)).ln()
}

fn sigmoid(u: f64) -> f64 {
    1.0 / (1.0 + (-u).exp())
}

impl ParamSpace {
    pub fn new(base: FitParams, lesions: Lesions, task: Task) -> ParamSpace {
        ParamSpace { base, lesions, theta: true, alpha: true, beta: task == Task::Classify, temperatures: true }
    }

    fn free_branches(&self) -> Vec<usize> {
        SetRule::ALL
            .iter()
            .filter(|&&r| !((r == SetRule::Dp && self.lesions.dp_off) || (r == SetRule::Var && self.lesions.var_off)))
            .map(|&r| r as usize)
            .collect()
    }

    pub fn dim(&self) -> usize {
        let th = if self.theta { 2 + self.free_branches().len() - 1 } else { 0 };
        th + self.alpha as usize + self.beta as usize + 2 * self.temperatures as usize
    }

    pub fn names(&self) -> Vec<String> {
        let mut v = vec![];
        if self.theta {
            v.push("p_RI".to_string());
            v.push("p_AI".to_string());
            let fb = self.free_branches();
            for &i in &fb[..fb.len() - 1] {
                v.push(format!("SET.{}", SetRule::ALL[i].name()));
            }
        }
        if self.alpha {
            v.push("alpha".into());
        }
        if self.beta {
            v.push("beta".into());
        }
        if self.temperatures {
            v.push("T_p".into());
            v.push("T_l".into());
        }
        v
    }

    pub fn decode(&self, u: &[f64]) -> FitParams {
        let mut p = self.base;
        let mut it = u.iter().copied();
        if self.theta {
            let p_ri = sigmoid(it.next().unwrap());
            let p_ai = sigmoid(it.next().unwrap());
            let fb = self.free_branches();
            let mut z: Vec<f64> = (0..fb.len() - 1).map(|_| it.next().unwrap()).collect();
            z.push(0.0);
            let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
            let s: f64 = e.iter().sum();
            let mut set = [0.0; 6];
            for (&i, ei) in fb.iter().zip(&e) {
                set[i] = ei / s;
            }
            p.theta = Theta { p_ri, p_ai, set };
        }
        if self.alpha {
            p.alpha = sigmoid(it.next().unwrap());
        }
        if self.beta {
            p.beta = sigmoid(it.next().unwrap());
        }
        if self.temperatures {
            p.t_p = 10f64.powf(T_RANGE_DECADES * it.next().unwrap().tanh());
            p.t_l = 10f64.powf(T_RANGE_DECADES * it.next().unwrap().tanh());
        }
        p
    }

    pub fn encode(&self, p: &FitParams) -> Vec<f64> {
        let mut u = vec![];
        if self.theta {
            u.push(logit(p.theta.p_ri));
            u.push(logit(p.theta.p_ai));
            let fb = self.free_branches();
            let last = p.theta.set[*fb.last().unwrap()].max(1e-12);
            for &i in &fb[..fb.len() - 1] {
                u.push((p.theta.set[i].max(1e-12) / last).ln());
            }
        }
        if self.alpha {
            u.push(logit(p.alpha));
        }
        if self.beta {
            u.push(logit(p.beta));
        }
        if self.temperatures {
            let t = |x: f64| (x.log10() / T_RANGE_DECADES).clamp(-0.999_999, 0.999_999).atanh();
            u.push(t(p.t_p));
            u.push(t(p.t_l));
        }
        u
    }
}

/// Check the constraints a returned parameter set must satisfy.
pub fn check_constraints(p: &FitParams) -> Result<(), FitError> {
    p.validate().map_err(|e| FitError::ConstraintViolation(e.to_string()))?;
    let range = 10f64.powf(-T_RANGE_DECADES)..=10f64.powf(T_RANGE_DECADES);
    if !range.contains(&p.t_p) || !range.contains(&p.t_l) {
        return Err(FitError::ConstraintViolation(format!("temperatures {} / {}", p.t_p, p.t_l)));
    }
    Ok(())
}

/// `ln C(n, k)`.
pub fn ln_choose(n: u32, k: u32) -> f64 {
    let k = k.min(n.saturating_sub(k));
    (0..k).map(|i| ((n - i) as f64).ln() - ((i + 1) as f64).ln()).sum()
}

/// `−ln C(n,k) p^k (1−p)^(n−k)`.
pub fn binomial_nll(p: f64, k: u32, n: u32) -> f64 {
    let term = |c: u32, q: f64| if c == 0 { 0.0 } else { c as f64 * q.ln() };
    -(ln_choose(n, k) + term(k, p) + term(n - k, 1.0 - p))
}

/// Per-trial binomial negative log-likelihood of classification counts.
pub fn nll_classification_by_trial(data: &[ClsTrialData], p: &FitParams, lesions: Lesions) -> Result<Vec<f64>, FitError> {
    check_constraints(p)?;
    let lt = p.log_theta(lesions)?;
    data.iter()
        .map(|d| {
            let post = d.view.posterior_with::<f64>(&lt, p.t_p, p.t_l)?;
            Ok(d.obs
                .iter()
                .map(|&(q, k, n)| binomial_nll(post.classify_query(&d.view, q, p.alpha, p.beta), k, n))
                .sum())
        })
        .collect()
}

pub fn nll_classification(data: &[ClsTrialData], p: &FitParams, lesions: Lesions) -> Result<f64, FitError> {
    Ok(nll_classification_by_trial(data, p, lesions)?.iter().sum())
}

/// Per-trial negative log predictive probability of generated tokens.
pub fn nll_generation_by_trial(data: &[GenTrialData], p: &FitParams, lesions: Lesions) -> Result<Vec<f64>, FitError> {
    check_constraints(p)?;
    let lt = p.log_theta(lesions)?;
    data.iter()
        .map(|d| {
            let post = d.view.posterior_with::<f64>(&lt, p.t_p, p.t_l)?;
            Ok(-d.tokens.iter().map(|&y| post.predictive_logprob(&d.view, y, p.alpha)).sum::<f64>())
        })
        .collect()
}

pub fn nll_generation(data: &[GenTrialData], p: &FitParams, lesions: Lesions) -> Result<f64, FitError> {
    Ok(nll_generation_by_trial(data, p, lesions)?.iter().sum())
}

/// The data a fit is run against.
#[derive(Debug, Clone, Copy)]
pub enum Dataset<'a> {
    Classification(&'a [ClsTrialData]),
    Generation(&'a [GenTrialData]),
}

impl Dataset<'_> {
    pub fn nll_by_trial(&self, p: &FitParams, lesions: Lesions) -> Result<Vec<f64>, FitError> {
        match self {
            Dataset::Classification(d) => nll_classification_by_trial(d, p, lesions),
            Dataset::Generation(d) => nll_generation_by_trial(d, p, lesions),
        }
    }

    pub fn nll(&self, p: &FitParams, lesions: Lesions) -> Result<f64, FitError> {
        Ok(self.nll_by_trial(p, lesions)?.iter().sum())
    }

    pub fn trial_ids(&self) -> Vec<String> {
        match self {
            Dataset::Classification(d) => d.iter().map(|t| t.view.trial_id.clone()).collect(),
            Dataset::Generation(d) => d.iter().map(|t| t.view.trial_id.clone()).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub starts: usize,
    pub seed: u64,
    pub optim: OptimOptions,
    /// Spread of random starts in unconstrained coordinates.
    pub init_sd: f64,
    /// Symmetric Dirichlet concentration on the `SET` branches; `None` is
    /// the pure likelihood objective.
    pub dirichlet: Option<f64>,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { starts: 10, seed: 0, optim: OptimOptions::default(), init_sd: 1.5, dirichlet: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartReport {
    pub init: FitParams,
    pub params: FitParams,
    pub nll: f64,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub params: FitParams,
    pub nll: f64,
    pub per_trial_nll: BTreeMap<String, f64>,
    pub starts: Vec<StartReport>,
    pub convergence: bool,
    pub free: Vec<String>,
}

fn penalty(p: &FitParams, dirichlet: Option<f64>) -> f64 {
    match dirichlet {
        Some(a) => -(a - 1.0) * p.theta.set.iter().filter(|&&s| s > 0.0).map(|s| s.ln()).sum::<f64>(),
        None => 0.0,
    }
}

/// Multi-start minimization of the negative log-likelihood. Start 0 is the
/// encoded `space.base`; the others perturb it with seeded Gaussian noise.
pub fn fit(data: Dataset, space: &ParamSpace, opts: &FitOptions) -> Result<FitReport, FitError> {
    check_constraints(&space.base)?;
    let x0 = space.encode(&space.base);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let inits: Vec<Vec<f64>> = (0..opts.starts.max(1))
        .map(|s| {
            if s == 0 {
                x0.clone()
            } else {
                x0.iter().map(|&v| v + opts.init_sd * rng.sample::<f64, _>(StandardNormal)).collect()
            }
        })
        .collect();
    let objective = |u: &[f64]| {
        let p = space.decode(u);
        match data.nll(&p, space.lesions) {
            Ok(v) => v + penalty(&p, opts.dirichlet),
            Err(_) => f64::INFINITY,
        }
    };
    let starts: Vec<StartReport> = std::thread::scope(|s| {
        let handles: Vec<_> = inits
            .iter()
            .map(|x| {
                let objective = &objective;
                s.spawn(move || {
                    let r = minimize(objective, x, &opts.optim);
                    StartReport {
                        init: space.decode(x),
                        params: space.decode(&r.x),
                        nll: r.f,
                        iterations: r.iterations,
                        converged: r.converged,
                        trace: r.trace,
                    }
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("fit thread")).collect()
    });
    let best = starts
        .iter()
        .filter(|s| s.nll.is_finite())
        .min_by(|a, b| a.nll.total_cmp(&b.nll))
        .ok_or(FitError::NonConvergence)?;
    if !starts.iter().any(|s| s.converged) {
        return Err(FitError::NonConvergence);
    }
    check_constraints(&best.params)?;
    let per = data.nll_by_trial(&best.params, space.lesions)?;
    Ok(FitReport {
        params: best.params,
        nll: per.iter().sum(),
        per_trial_nll: data.trial_ids().into_iter().zip(per).collect(),
        convergence: best.converged,
        starts,
        free: space.names(),
    })
}

#[cfg(test)]
mod tests;
