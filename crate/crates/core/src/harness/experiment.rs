//! End-to-end pipeline: fixtures, hypothesis space, data, fits, predictions
//! and the comparison report.

use super::bias::{bias_sets, BIAS_KINDS};
use super::stats::{paired_t, pearson_r, StatsError, TTest};
use crate::baselines::{
    fit_gcm, gcm_nll_classification, gcm_nll_generation, BaselineError, DistanceTable, GcmClsTrial, GcmGenTrial, GcmWeights,
    SCORE_EPS,
};
use crate::fitting::{
    binomial_nll, fit, prepare_classification, prepare_generation, synthesize_classification, synthesize_generation,
    ClassificationRecord, Dataset, FitError, FitOptions, GenerationRecord, ParamSpace, Task,
};
use crate::geometry::{AttachmentTable, PrimitiveBank};
use crate::grammar::{Grammar, Lesions};
use crate::inference::{build_space, FitParams, HypothesisSpace, SpaceConfig, TrialView};
use crate::token::{TokenError, UniverseCache};
use crate::trials::fixtures::standard_trials_upto;
use crate::trials::{ResolvedTrial, Trial};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelId {
    #[serde(rename = "bayes-full")]
    BayesFull,
    #[serde(rename = "bayes-no-dp")]
    BayesNoDp,
    #[serde(rename = "bayes-no-var")]
    BayesNoVar,
    #[serde(rename = "gcm-string")]
    GcmString,
}

impl ModelId {
    pub const ALL: [ModelId; 4] = [ModelId::BayesFull, ModelId::BayesNoDp, ModelId::BayesNoVar, ModelId::GcmString];

    pub fn name(self) -> &'static str {
        match self {
            ModelId::BayesFull => "bayes-full",
            ModelId::BayesNoDp => "bayes-no-dp",
            ModelId::BayesNoVar => "bayes-no-var",
            ModelId::GcmString => "gcm-string",
        }
    }

    pub fn lesions(self) -> Option<Lesions> {
        match self {
            ModelId::BayesFull => Some(Lesions::NONE),
            ModelId::BayesNoDp => Some(Lesions::NO_DP),
            ModelId::BayesNoVar => Some(Lesions::NO_VAR),
            ModelId::GcmString => None,
        }
    }
}

impl std::str::FromStr for ModelId {
    type Err = String;

    fn from_str(s: &str) -> Result<ModelId, String> {
        ModelId::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| format!("unknown model {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Explicit trials; when absent the first `n_trials` built-in fixtures.
    pub trials: Option<Vec<Trial>>,
    pub n_trials: usize,
    pub chains: usize,
    pub steps: usize,
    pub top_k: usize,
    pub models: Vec<ModelId>,
    /// Parameters used to synthesize data when none is supplied.
    pub truth: FitParams,
    pub cls_subjects: u32,
    pub gen_subjects: u32,
    pub gen_per_subject: u32,
    pub starts: usize,
    pub classification: Option<Vec<ClassificationRecord>>,
    pub generation: Option<Vec<GenerationRecord>>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            trials: None,
            n_trials: 155,
            chains: 3,
            steps: 100_000,
            top_k: 200,
            models: ModelId::ALL.to_vec(),
            truth: FitParams { alpha: 0.95, beta: 0.3, ..FitParams::default() },
            cls_subjects: 200,
            gen_subjects: 20,
            gen_per_subject: 3,
            starts: 10,
            classification: None,
            generation: None,
        }
    }
}

impl ExperimentConfig {
    /// Two trials, 3 chains × 2,000 steps.
    pub fn smoke() -> Self {
        ExperimentConfig { n_trials: 2, steps: 2000, starts: 3, cls_subjects: 50, gen_subjects: 10, ..Default::default() }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("trial {trial}: {source}")]
    Trial { trial: String, source: TokenError },
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error("{model}: {source}")]
    Baseline { model: &'static str, source: BaselineError },
    #[error("{what}: {source}")]
    Stats { what: String, source: StatsError },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// One classification prediction, a row of the per-item CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClsPrediction {
    pub model: ModelId,
    pub trial_id: String,
    pub item: String,
    pub k: u32,
    pub n: u32,
    pub p: f64,
    pub loglik: f64,
}

/// One generated token scored by a model, a row of the per-token CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenPrediction {
    pub model: ModelId,
    pub trial_id: String,
    pub participant_id: String,
    pub token: String,
    pub logp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FittedParams {
    Bayes(FitParams),
    Gcm(GcmWeights),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub cls_params: FittedParams,
    pub gen_params: FittedParams,
    pub cls_nll: f64,
    /// Correlation of predicted probability with the observed yes rate.
    pub cls_r: f64,
    pub gen_nll: f64,
    pub gen_loglik_per_token: f64,
    /// Paired tests of the full model against this one; absent for the full
    /// model itself.
    pub cls_vs_full: Option<TTest>,
    pub gen_vs_full: Option<TTest>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRun {
    pub model: ModelId,
    pub metrics: Metrics,
    pub cls: Vec<ClsPrediction>,
    pub gen: Vec<GenPrediction>,
}

/// Model mass and observed frequency on one bias-consistent token set,
/// averaged over generation trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasRow {
    pub bias: String,
    pub model: ModelId,
    pub trials: usize,
    pub model_mass: f64,
    pub empirical: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub version: String,
    pub seed: u64,
    pub trials: Vec<String>,
    pub space_size: usize,
    pub space_by_trial: BTreeMap<String, usize>,
    pub models: BTreeMap<String, Metrics>,
    pub bias: Vec<BiasRow>,
}

pub struct Experiment {
    pub report: Report,
    pub runs: Vec<ModelRun>,
    pub space: HypothesisSpace,
    pub trials: Vec<ResolvedTrial>,
}

pub fn resolve_all(trials: &[Trial], cache: &UniverseCache) -> Result<Vec<ResolvedTrial>, ExperimentError> {
    trials
        .iter()
        .map(|t| t.resolve(cache).map_err(|source| ExperimentError::Trial { trial: t.trial_id.clone(), source }))
        .collect()
}

/// Chains under the full grammar and under each lesion, merged, so that
/// lesioned models have hypotheses they can derive.
pub fn build_model_space(bank: &PrimitiveBank, trials: &[ResolvedTrial], cfg: &SpaceConfig) -> HypothesisSpace {
    let mut space = HypothesisSpace::default();
    for (i, l) in [Lesions::NONE, Lesions::NO_DP, Lesions::NO_VAR].into_iter().enumerate() {
        let g = Grammar::default().lesion(l).expect("uniform grammar lesions are valid");
        let part = build_space(&g, bank, trials, &SpaceConfig { seed: cfg.seed.wrapping_add(i as u64), ..*cfg });
        space.merge(part);
    }
    space
}

fn stream(seed: u64, s: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(s);
    r
}

pub fn run_experiment(
    cfg: &ExperimentConfig,
    bank: Arc<PrimitiveBank>,
    table: Arc<AttachmentTable>,
) -> Result<Experiment, ExperimentError> {
    let cache = UniverseCache::new(bank.clone(), table.clone(), 32);
    let trials = match &cfg.trials {
        Some(t) => t.clone(),
        None => standard_trials_upto(&bank, &table, cfg.seed, cfg.n_trials),
    };
    let rts = resolve_all(&trials, &cache)?;
    let scfg = SpaceConfig { chains: cfg.chains, steps: cfg.steps, top_k: cfg.top_k, seed: cfg.seed };
    let space = build_model_space(&bank, &rts, &scfg);
    log::info!("space: {} hypotheses over {} trials", space.len(), rts.len());

    let cls_recs = match &cfg.classification {
        Some(r) => r.clone(),
        None => synthesize_classification(&space, &rts, &cfg.truth, Lesions::NONE, cfg.cls_subjects, &mut stream(cfg.seed, 1))?,
    };
    let gen_recs = match &cfg.generation {
        Some(r) => r.clone(),
        None => synthesize_generation(
            &space,
            &rts,
            &cfg.truth,
            Lesions::NONE,
            cfg.gen_subjects,
            cfg.gen_per_subject,
            &mut stream(cfg.seed, 2),
        )?,
    };

    let cls_data = prepare_classification(&space, &rts, &cls_recs, &bank, &table)?;
    let gen_data = prepare_generation(&space, &rts, &gen_recs, &bank, &table)?;
    let cls_order = ordered_cls(&cls_recs, &cls_data.iter().map(|d| d.view.trial_id.clone()).collect::<Vec<_>>());
    let gen_order = ordered_gen(&gen_recs, &gen_data.iter().map(|d| d.view.trial_id.clone()).collect::<Vec<_>>());

    let mut runs = vec![];
    let mut models = cfg.models.clone();
    models.sort();
    models.dedup();
    for (mi, &m) in models.iter().enumerate() {
        let fopts = FitOptions { starts: cfg.starts, seed: cfg.seed.wrapping_add(100 + mi as u64), ..FitOptions::default() };
        let run = match m.lesions() {
            Some(l) => {
                let cr = fit(Dataset::Classification(&cls_data), &ParamSpace::new(FitParams::default(), l, Task::Classify), &fopts)?;
                let gr = fit(Dataset::Generation(&gen_data), &ParamSpace::new(FitParams::default(), l, Task::Generate), &fopts)?;
                let mut cls = vec![];
                for (d, recs) in cls_data.iter().zip(&cls_order) {
                    let post = d.view.posterior::<f64>(&cr.params, l).map_err(FitError::from)?;
                    for (&(q, k, n), r) in d.obs.iter().zip(recs) {
                        let p = post.classify_query(&d.view, q, cr.params.alpha, cr.params.beta);
                        cls.push(cls_row(m, r, p, -binomial_nll(p, k, n)));
                    }
                }
                let mut gen = vec![];
                for (d, recs) in gen_data.iter().zip(&gen_order) {
                    let post = d.view.posterior::<f64>(&gr.params, l).map_err(FitError::from)?;
                    for (&y, r) in d.tokens.iter().zip(recs) {
                        gen.push(gen_row(m, r, post.predictive_logprob(&d.view, y, gr.params.alpha)));
                    }
                }
                (FittedParams::Bayes(cr.params), FittedParams::Bayes(gr.params), cls, gen)
            }
            None => gcm_run(m, &rts, &cls_data, &cls_order, &gen_data, &gen_order)?,
        };
        let (cp, gp, cls, gen) = run;
        runs.push(ModelRun { model: m, metrics: metrics(cp, gp, &cls, &gen)?, cls, gen });
    }
    compare_to_full(&mut runs)?;

    let bias = bias_audit(&runs, &rts, &gen_data, &space)?;
    let report = Report {
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: cfg.seed,
        trials: rts.iter().map(|t| t.id().to_string()).collect(),
        space_size: space.len(),
        space_by_trial: space.trial_counts(),
        models: runs.iter().map(|r| (r.model.name().to_string(), r.metrics.clone())).collect(),
        bias,
    };
    Ok(Experiment { report, runs, space, trials: rts })
}

/// Records grouped per prepared trial, in the order the preparation used.
fn ordered_cls<'a>(recs: &'a [ClassificationRecord], ids: &[String]) -> Vec<Vec<&'a ClassificationRecord>> {
    ids.iter().map(|id| recs.iter().filter(|r| &r.trial_id == id).collect()).collect()
}

fn ordered_gen<'a>(recs: &'a [GenerationRecord], ids: &[String]) -> Vec<Vec<&'a GenerationRecord>> {
    ids.iter().map(|id| recs.iter().filter(|r| &r.trial_id == id).collect()).collect()
}

fn cls_row(m: ModelId, r: &ClassificationRecord, p: f64, loglik: f64) -> ClsPrediction {
    ClsPrediction { model: m, trial_id: r.trial_id.clone(), item: r.item.clone(), k: r.k, n: r.n, p, loglik }
}

fn gen_row(m: ModelId, r: &GenerationRecord, logp: f64) -> GenPrediction {
    GenPrediction {
        model: m,
        trial_id: r.trial_id.clone(),
        participant_id: r.participant_id.clone(),
        token: r.token.clone(),
        logp,
    }
}

type RunParts = (FittedParams, FittedParams, Vec<ClsPrediction>, Vec<GenPrediction>);

fn gcm_run(
    m: ModelId,
    rts: &[ResolvedTrial],
    cls_data: &[crate::fitting::ClsTrialData],
    cls_order: &[Vec<&ClassificationRecord>],
    gen_data: &[crate::fitting::GenTrialData],
    gen_order: &[Vec<&GenerationRecord>],
) -> Result<RunParts, ExperimentError> {
    let err = |source| ExperimentError::Baseline { model: m.name(), source };
    let strings = |rt: &ResolvedTrial, ts: &[u32]| ts.iter().map(|&t| rt.universe.string(t).to_string()).collect::<Vec<_>>();
    let find = |id: &str| rts.iter().find(|t| t.id() == id).expect("prepared from these trials");
    let cls_trials: Vec<GcmClsTrial> = cls_data
        .iter()
        .map(|d| {
            let rt = find(&d.view.trial_id);
            let table = DistanceTable::new(&strings(rt, &d.view.queries), &strings(rt, &rt.exemplars)).map_err(err)?;
            Ok(GcmClsTrial { trial_id: d.view.trial_id.clone(), table, obs: d.obs.clone() })
        })
        .collect::<Result<_, ExperimentError>>()?;
    let gen_trials: Vec<GcmGenTrial> = gen_data
        .iter()
        .map(|d| {
            let rt = find(&d.view.trial_id);
            let all: Vec<u32> = (0..rt.universe.len() as u32).collect();
            let table = DistanceTable::new(&strings(rt, &all), &strings(rt, &rt.exemplars)).map_err(err)?;
            Ok(GcmGenTrial { trial_id: d.view.trial_id.clone(), table, tokens: d.tokens.clone() })
        })
        .collect::<Result<_, ExperimentError>>()?;
    let cf = fit_gcm(|w| gcm_nll_classification(&cls_trials, w));
    let gf = fit_gcm(|w| gcm_nll_generation(&gen_trials, w));
    let mut cls = vec![];
    for (t, recs) in cls_trials.iter().zip(cls_order) {
        let s = normalized(t.table.similarity(&cf.weights));
        for (&(q, k, n), r) in t.obs.iter().zip(recs) {
            let p = s[q];
            cls.push(cls_row(m, r, p, -binomial_nll(p.clamp(SCORE_EPS, 1.0 - SCORE_EPS), k, n)));
        }
    }
    let mut gen = vec![];
    for (t, recs) in gen_trials.iter().zip(gen_order) {
        let s = t.table.similarity(&gf.weights);
        let lz = s.iter().sum::<f64>().ln();
        for (&y, r) in t.tokens.iter().zip(recs) {
            gen.push(gen_row(m, r, s[y as usize].ln() - lz));
        }
    }
    Ok((FittedParams::Gcm(cf.weights), FittedParams::Gcm(gf.weights), cls, gen))
}

fn normalized(s: Vec<f64>) -> Vec<f64> {
    let m = s.iter().copied().fold(0.0, f64::max);
    s.into_iter().map(|v| if m > 0.0 { v / m } else { 1.0 }).collect()
}

fn metrics(cp: FittedParams, gp: FittedParams, cls: &[ClsPrediction], gen: &[GenPrediction]) -> Result<Metrics, ExperimentError> {
    let pred: Vec<f64> = cls.iter().map(|c| c.p).collect();
    let obs: Vec<f64> = cls.iter().map(|c| c.k as f64 / c.n.max(1) as f64).collect();
    let cls_r = match pearson_r(&pred, &obs) {
        Ok(r) => r,
        Err(StatsError::DegenerateVariance) | Err(StatsError::TooFew) => f64::NAN,
        Err(source) => return Err(ExperimentError::Stats { what: "classification r".into(), source }),
    };
    let gen_nll = -gen.iter().map(|g| g.logp).sum::<f64>();
    Ok(Metrics {
        cls_params: cp,
        gen_params: gp,
        cls_nll: -cls.iter().map(|c| c.loglik).sum::<f64>(),
        cls_r,
        gen_nll,
        gen_loglik_per_token: if gen.is_empty() { f64::NAN } else { -gen_nll / gen.len() as f64 },
        cls_vs_full: None,
        gen_vs_full: None,
    })
}

fn compare_to_full(runs: &mut [ModelRun]) -> Result<(), ExperimentError> {
    let Some(full) = runs.iter().find(|r| r.model == ModelId::BayesFull).cloned() else {
        return Ok(());
    };
    let a: Vec<f64> = full.cls.iter().map(|c| c.loglik).collect();
    let ga: Vec<f64> = full.gen.iter().map(|g| g.logp).collect();
    for r in runs.iter_mut().filter(|r| r.model != ModelId::BayesFull) {
        let b: Vec<f64> = r.cls.iter().map(|c| c.loglik).collect();
        let gb: Vec<f64> = r.gen.iter().map(|g| g.logp).collect();
        r.metrics.cls_vs_full = paired_t(&a, &b).ok();
        r.metrics.gen_vs_full = paired_t(&ga, &gb).ok();
    }
    Ok(())
}

fn bias_audit(
    runs: &[ModelRun],
    rts: &[ResolvedTrial],
    gen_data: &[crate::fitting::GenTrialData],
    space: &HypothesisSpace,
) -> Result<Vec<BiasRow>, ExperimentError> {
    let trials: Vec<(&ResolvedTrial, &crate::fitting::GenTrialData, [Vec<u32>; 4])> = gen_data
        .iter()
        .filter(|d| !d.tokens.is_empty())
        .map(|d| {
            let rt = rts.iter().find(|t| t.id() == d.view.trial_id).expect("prepared from these trials");
            (rt, d, bias_sets(&rt.universe, &rt.exemplars))
        })
        .collect();
    let mut out = vec![];
    for run in runs {
        let FittedParams::Bayes(params) = &run.metrics.gen_params else { continue };
        let l = run.model.lesions().expect("bayesian model");
        let mut acc = [(0.0, 0.0, 0usize); 4];
        for (rt, d, sets) in &trials {
            let view = TrialView::new(space, rt, &[]);
            let table = view.posterior::<f64>(params, l).map_err(FitError::from)?.predictive_table(&view, params.alpha);
            for (set, a) in sets.iter().zip(acc.iter_mut()) {
                if set.is_empty() {
                    continue;
                }
                a.0 += set.iter().map(|&t| table[t as usize]).sum::<f64>();
                a.1 += d.tokens.iter().filter(|t| set.binary_search(t).is_ok()).count() as f64 / d.tokens.len() as f64;
                a.2 += 1;
            }
        }
        for (bias, (mass, emp, n)) in BIAS_KINDS.iter().zip(acc) {
            if n > 0 {
                out.push(BiasRow {
                    bias: bias.to_string(),
                    model: run.model,
                    trials: n,
                    model_mass: mass / n as f64,
                    empirical: emp / n as f64,
                });
            }
        }
    }
    Ok(out)
}

impl Experiment {
    /// Write `report.json`, `classification.csv`, `generation.csv` and
    /// `bias.csv` into `dir`.
    pub fn write(&self, dir: &std::path::Path) -> Result<(), ExperimentError> {
        std::fs::create_dir_all(dir)?;
        let mut f = std::fs::File::create(dir.join("report.json"))?;
        serde_json::to_writer_pretty(&mut f, &self.report).map_err(std::io::Error::from)?;
        f.write_all(b"\n")?;
        let mut w = csv::Writer::from_path(dir.join("classification.csv"))?;
        for r in self.runs.iter().flat_map(|r| &r.cls) {
            w.serialize(r)?;
        }
        w.flush()?;
        let mut w = csv::Writer::from_path(dir.join("generation.csv"))?;
        for r in self.runs.iter().flat_map(|r| &r.gen) {
            w.serialize(r)?;
        }
        w.flush()?;
        let mut w = csv::Writer::from_path(dir.join("bias.csv"))?;
        for r in &self.report.bias {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}
