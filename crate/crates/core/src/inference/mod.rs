//! Hypothesis spaces, tempered posteriors and the decision rules built on them.
//!
//! A [`TrialView`] keeps, for one trial, only the hypotheses of a space whose
//! extension contains every exemplar; the rest have likelihood zero and can
//! never receive weight. Posteriors are recomputed from rule-usage counts, so
//! changing production probabilities or temperatures never re-runs programs.

mod mcmc;
mod space;

pub use mcmc::{mcmc_chain, ChainResult, ChainState, Fit, LikMemo};
pub use space::{build_space, chain_rng, trial_top_k, HypothesisSpace, Provenance, SpaceConfig, SpaceEntry, SpaceError};

use crate::grammar::{log_gen, Grammar, GrammarError, Lesions, Nt, RuleCounts, Theta, N_RULES};
use crate::interpreter::{evaluate, Extension};
use crate::num::{log_sum_exp, Real};
use crate::token::Universe;
use crate::trials::ResolvedTrial;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum InferenceError {
    #[error("no hypothesis in the space has nonzero posterior weight")]
    NoViableHypothesis,
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Grammar(#[from] GrammarError),
}

/// Model parameters fitted to behaviour.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitParams {
    pub theta: Theta,
    pub alpha: f64,
    pub beta: f64,
    pub t_p: f64,
    pub t_l: f64,
}

impl Default for FitParams {
    fn default() -> Self {
        FitParams { theta: Theta::default(), alpha: 0.9, beta: 0.5, t_p: 1.0, t_l: 1.0 }
    }
}

impl FitParams {
    pub fn validate(&self) -> Result<(), InferenceError> {
        self.theta.validate()?;
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if !unit(self.alpha) || !unit(self.beta) {
            return Err(InferenceError::InvalidParams(format!("alpha {} / beta {} outside [0, 1]", self.alpha, self.beta)));
        }
        if !(self.t_p > 0.0 && self.t_l > 0.0 && self.t_p.is_finite() && self.t_l.is_finite()) {
            return Err(InferenceError::InvalidParams(format!("temperatures {} / {} must be positive", self.t_p, self.t_l)));
        }
        Ok(())
    }

    /// Log production probabilities with lesioned branches removed.
    pub fn log_theta(&self, lesions: Lesions) -> Result<[f64; N_RULES], InferenceError> {
        Ok(*Grammar::new(self.theta, lesions)?.log_theta())
    }
}

/// One exemplar-consistent hypothesis as seen from a trial.
#[derive(Debug, Clone)]
pub struct Row {
    /// Index into the space's entries.
    pub entry: usize,
    pub counts: RuleCounts,
    pub fixed: f64,
    pub size: u32,
    /// Membership of each query token, in view order.
    pub member: Vec<bool>,
    pub extension: Arc<Extension>,
}

#[derive(Debug, Clone)]
pub struct TrialView {
    pub trial_id: String,
    pub universe: Arc<Universe>,
    pub exemplars: Vec<u32>,
    pub queries: Vec<u32>,
    pub rows: Vec<Row>,
}

impl TrialView {
    /// Evaluate the space in this trial's universe. Queries are the trial's
    /// test items followed by `extra`.
    pub fn new(space: &HypothesisSpace, trial: &ResolvedTrial, extra: &[u32]) -> TrialView {
        TrialView::from_parts(space, trial.id(), trial.universe.clone(), &trial.exemplars, &[&trial.items[..], extra].concat())
    }

    pub fn from_parts(
        space: &HypothesisSpace,
        trial_id: &str,
        universe: Arc<Universe>,
        exemplars: &[u32],
        queries: &[u32],
    ) -> TrialView {
        let u = &*universe;
        let rows = space
            .entries()
            .iter()
            .enumerate()
            .filter_map(|(i, e)| {
                let ext = evaluate(&e.program, u).ok()?;
                if !exemplars.iter().all(|&x| ext.contains(x)) {
                    return None;
                }
                let (counts, fixed) = log_gen(&e.program, Nt::Start, u, 0).ok()?;
                Some(Row {
                    entry: i,
                    counts,
                    fixed,
                    size: ext.size() as u32,
                    member: queries.iter().map(|&y| ext.contains(y)).collect(),
                    extension: Arc::new(ext),
                })
            })
            .collect();
        TrialView {
            trial_id: trial_id.to_string(),
            universe,
            exemplars: exemplars.to_vec(),
            queries: queries.to_vec(),
            rows,
        }
    }

    /// `log P(h)` under `log_theta` for every row.
    pub fn log_priors(&self, log_theta: &[f64; N_RULES]) -> Vec<f64> {
        self.rows.iter().map(|r| r.counts.dot(log_theta) + r.fixed).collect()
    }

    pub fn query_index(&self, y: u32) -> Option<usize> {
        self.queries.iter().position(|&q| q == y)
    }

    pub fn posterior<R: Real>(&self, params: &FitParams, lesions: Lesions) -> Result<Posterior<R>, InferenceError> {
        params.validate()?;
        let lt = params.log_theta(lesions)?;
        self.posterior_with(&lt, params.t_p, params.t_l)
    }

    /// Weights `∝ P(h)^{1/T_p} · P(X|h)^{1/T_l}` renormalized over the rows.
    pub fn posterior_with<R: Real>(
        &self,
        log_theta: &[f64; N_RULES],
        t_p: f64,
        t_l: f64,
    ) -> Result<Posterior<R>, InferenceError> {
        let n = R::of(self.exemplars.len() as f64);
        let (tp, tl) = (R::of(t_p), R::of(t_l));
        let logw: Vec<R> = self
            .rows
            .iter()
            .map(|r| {
                let lp = R::of(r.counts.dot(log_theta) + r.fixed);
                lp / tp - n * R::of(r.size as f64).ln() / tl
            })
            .collect();
        let z = log_sum_exp(&logw);
        if !z.is_finite() {
            return Err(InferenceError::NoViableHypothesis);
        }
        Ok(Posterior { weights: logw.into_iter().map(|l| (l - z).exp()).collect() })
    }
}

/// Normalized weights aligned with [`TrialView::rows`].
#[derive(Debug, Clone, PartialEq)]
pub struct Posterior<R> {
    pub weights: Vec<R>,
}

impl<R: Real> Posterior<R> {
    /// Posterior mass on hypotheses containing query `q`.
    pub fn mass_on_query(&self, view: &TrialView, q: usize) -> R {
        self.weights.iter().zip(&view.rows).filter(|(_, r)| r.member[q]).map(|(&w, _)| w).sum()
    }

    pub fn mass_on(&self, view: &TrialView, y: u32) -> R {
        self.weights.iter().zip(&view.rows).filter(|(_, r)| r.extension.contains(y)).map(|(&w, _)| w).sum()
    }

    /// `Σ_h (α·𝟙(y∈h) + (1−α)·β)·P̂(h|X)` for query `q`.
    pub fn classify_query(&self, view: &TrialView, q: usize, alpha: R, beta: R) -> R {
        alpha * self.mass_on_query(view, q) + (R::one() - alpha) * beta
    }

    pub fn classify(&self, view: &TrialView, y: u32, alpha: R, beta: R) -> R {
        alpha * self.mass_on(view, y) + (R::one() - alpha) * beta
    }

    /// `log Σ_h P̂(h|X)·(α·𝟙(y∈h)/|h| + (1−α)·P⁰(y))`.
    pub fn predictive_logprob(&self, view: &TrialView, y: u32, alpha: R) -> R {
        let concept: R = self
            .weights
            .iter()
            .zip(&view.rows)
            .filter(|(_, r)| r.extension.contains(y))
            .map(|(&w, r)| w / R::of(r.size as f64))
            .sum();
        let null = R::of(view.universe.null_logp()[y as usize]).exp();
        (alpha * concept + (R::one() - alpha) * null).ln()
    }

    /// Predictive probability of every token in the universe.
    pub fn predictive_table(&self, view: &TrialView, alpha: f64) -> Vec<f64> {
        let mut p: Vec<f64> = view.universe.null_logp().iter().map(|l| (1.0 - alpha) * l.exp()).collect();
        for (w, r) in self.weights.iter().zip(&view.rows) {
            let share = alpha * w.to_f64_lossy() / r.size as f64;
            for &t in r.extension.tokens() {
                p[t as usize] += share;
            }
        }
        p
    }

    pub fn sample_predictive<G: Rng + ?Sized>(&self, view: &TrialView, alpha: f64, rng: &mut G) -> u32 {
        if rng.gen::<f64>() >= alpha {
            return view.universe.sample_null(rng);
        }
        let r = &view.rows[self.sample_row(rng)];
        r.extension.tokens()[rng.gen_range(0..r.extension.size())]
    }

    pub fn sample_row<G: Rng + ?Sized>(&self, rng: &mut G) -> usize {
        let mut x = rng.gen::<f64>();
        for (i, w) in self.weights.iter().enumerate() {
            x -= w.to_f64_lossy();
            if x < 0.0 {
                return i;
            }
        }
        // rounding left a sliver; the last supported row absorbs it
        self.weights.iter().rposition(|w| *w > R::zero()).expect("posterior has support")
    }

    /// Rows ordered by decreasing weight.
    pub fn ranked(&self) -> Vec<(usize, R)> {
        let mut v: Vec<(usize, R)> = self.weights.iter().copied().enumerate().collect();
        v.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal).then(a.0.cmp(&b.0)));
        v
    }
}

/// Mean per-token predictive log-probability of generated tokens `ys`.
pub fn score_tokens(post: &Posterior<f64>, view: &TrialView, ys: &[u32], alpha: f64) -> (Vec<f64>, Option<f64>) {
    let lps: Vec<f64> = ys.iter().map(|&y| post.predictive_logprob(view, y, alpha)).collect();
    let mean = (!lps.is_empty()).then(|| lps.iter().sum::<f64>() / lps.len() as f64);
    (lps, mean)
}

pub fn null_token_logprob(u: &Universe, y: u32) -> f64 {
    u.null_logp()[y as usize]
}

pub fn sample_null<G: Rng + ?Sized>(u: &Universe, rng: &mut G) -> u32 {
    u.sample_null(rng)
}

#[cfg(test)]
mod tests;
