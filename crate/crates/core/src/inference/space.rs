use super::mcmc::{mcmc_chain, ChainState, LikMemo};
use crate::geometry::PrimitiveBank;
use crate::grammar::{log_gen, parse_program, Expr, Grammar, GrammarError, Nt};
use crate::interpreter::evaluate;
use crate::trials::ResolvedTrial;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpaceConfig {
    pub chains: usize,
    pub steps: usize,
    pub top_k: usize,
    pub seed: u64,
}

impl Default for SpaceConfig {
    fn default() -> Self {
        SpaceConfig { chains: 3, steps: 100_000, top_k: 200, seed: 0 }
    }
}

/// Where a hypothesis was retained: trial, rank among that trial's top-k and
/// its unit-temperature posterior score there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub trial_id: String,
    pub rank: u32,
    pub score: f64,
    pub visits: u64,
}

#[derive(Debug, Clone)]
pub struct SpaceEntry {
    pub program: Expr,
    pub sexpr: String,
    pub found_in: Vec<Provenance>,
}

/// Deduplicated union of per-trial top-k hypotheses.
#[derive(Debug, Clone, Default)]
pub struct HypothesisSpace {
    entries: Vec<SpaceEntry>,
    index: HashMap<String, usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SpaceLine {
    program_sexpr: String,
    found_in: Vec<Provenance>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    log_prior_raw: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    extension_sample: Vec<String>,
}

impl HypothesisSpace {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[SpaceEntry] {
        &self.entries
    }

    pub fn get(&self, sexpr: &str) -> Option<&SpaceEntry> {
        self.index.get(sexpr).map(|&i| &self.entries[i])
    }

    pub fn insert(&mut self, program: Expr, sexpr: String, found: Option<Provenance>) {
        let i = *self.index.entry(sexpr.clone()).or_insert_with(|| {
            self.entries.push(SpaceEntry { program, sexpr, found_in: vec![] });
            self.entries.len() - 1
        });
        if let Some(p) = found {
            self.entries[i].found_in.push(p);
        }
    }

    /// Union with another space, keeping both provenance records.
    pub fn merge(&mut self, other: HypothesisSpace) {
        for e in other.entries {
            let found = e.found_in;
            self.insert(e.program, e.sexpr.clone(), None);
            let i = self.index[&e.sexpr];
            self.entries[i].found_in.extend(found);
        }
    }

    /// The sub-space of programs a (possibly lesioned) grammar can derive.
    pub fn restricted_to(&self, g: &Grammar, u: &crate::token::Universe) -> HypothesisSpace {
        let mut out = HypothesisSpace::default();
        for e in &self.entries {
            if derivable(g, &e.program, u) {
                out.insert(e.program.clone(), e.sexpr.clone(), None);
                out.entries.last_mut().unwrap().found_in = e.found_in.clone();
            }
        }
        out
    }

    /// Records for one trial, best first.
    pub fn provenance(&self, trial_id: &str) -> Vec<(&SpaceEntry, &Provenance)> {
        let mut v: Vec<_> = self
            .entries
            .iter()
            .flat_map(|e| e.found_in.iter().filter(|p| p.trial_id == trial_id).map(move |p| (e, p)))
            .collect();
        v.sort_by_key(|(_, p)| p.rank);
        v
    }

    pub fn trial_counts(&self) -> BTreeMap<String, usize> {
        let mut m = BTreeMap::new();
        for p in self.entries.iter().flat_map(|e| &e.found_in) {
            *m.entry(p.trial_id.clone()).or_insert(0) += 1;
        }
        m
    }

    /// JSONL, one hypothesis per line. When `trials` is given, size, prior and
    /// an extension sample are computed in the universe of the first trial
    /// that retained the hypothesis.
    pub fn write_jsonl<W: Write>(
        &self,
        mut w: W,
        g: &Grammar,
        trials: &[ResolvedTrial],
    ) -> std::io::Result<()> {
        let by_id: HashMap<&str, &ResolvedTrial> = trials.iter().map(|t| (t.id(), t)).collect();
        for e in &self.entries {
            let mut line = SpaceLine {
                program_sexpr: e.sexpr.clone(),
                found_in: e.found_in.clone(),
                size: None,
                log_prior_raw: None,
                extension_sample: vec![],
            };
            if let Some(t) = e.found_in.iter().find_map(|p| by_id.get(p.trial_id.as_str())) {
                let u = &t.universe;
                if let Ok(ext) = evaluate(&e.program, u) {
                    line.size = Some(ext.size());
                    line.extension_sample = ext.tokens().iter().take(8).map(|&i| u.string(i).to_string()).collect();
                }
                line.log_prior_raw = g.log_prior(&e.program, u, 1.0).ok();
            }
            serde_json::to_writer(&mut w, &line)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(r: R, bank: &PrimitiveBank) -> Result<HypothesisSpace, SpaceError> {
        let mut s = HypothesisSpace::default();
        for (n, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: SpaceLine =
                serde_json::from_str(&line).map_err(|e| SpaceError::Format(n + 1, e.to_string()))?;
            let program = parse_program(&rec.program_sexpr, bank)?;
            let sexpr = program.to_sexpr(bank);
            s.insert(program, sexpr.clone(), None);
            let i = s.index[&sexpr];
            s.entries[i].found_in.extend(rec.found_in);
        }
        Ok(s)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SpaceError {
    #[error("space file line {0}: {1}")]
    Format(usize, String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Grammar(#[from] GrammarError),
}

pub(crate) fn derivable(g: &Grammar, p: &Expr, u: &crate::token::Universe) -> bool {
    p.depth() <= g.max_depth
        && log_gen(p, Nt::Start, u, 0).map(|(c, f)| g.log_prior_from(&c, f).is_finite()).unwrap_or(false)
}

/// Seeded generator for chain `chain` of trial number `trial`.
pub fn chain_rng(seed: u64, trial: usize, chain: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((trial as u64) << 16) | chain as u64);
    rng
}

/// Best `top_k` distinct programs with finite likelihood over all chains of
/// one trial, ranked by unit-temperature posterior score.
pub fn trial_top_k(
    g: &Grammar,
    bank: &PrimitiveBank,
    t: &ResolvedTrial,
    trial_ix: usize,
    cfg: &SpaceConfig,
) -> Vec<(ChainState, u64)> {
    let results: Vec<Vec<ChainState>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..cfg.chains)
            .map(|c| {
                s.spawn(move || {
                    let mut rng = chain_rng(cfg.seed, trial_ix, c);
                    let mut memo = LikMemo::new();
                    mcmc_chain(g, bank, &t.universe, &t.exemplars, cfg.steps, &mut memo, &mut rng).states
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("chain thread")).collect()
    });
    let mut best: HashMap<String, (ChainState, u64)> = HashMap::new();
    for st in results.into_iter().flatten() {
        if !st.log_lik.is_finite() {
            continue;
        }
        let v = st.visits;
        best.entry(st.sexpr.clone()).and_modify(|e| e.1 += v).or_insert((st, v));
    }
    let mut ranked: Vec<(ChainState, u64)> = best.into_values().collect();
    ranked.sort_by(|a, b| b.0.score().total_cmp(&a.0.score()).then_with(|| a.0.sexpr.cmp(&b.0.sexpr)));
    ranked.truncate(cfg.top_k);
    ranked
}

pub fn build_space(g: &Grammar, bank: &PrimitiveBank, trials: &[ResolvedTrial], cfg: &SpaceConfig) -> HypothesisSpace {
    let mut space = HypothesisSpace::default();
    for (i, t) in trials.iter().enumerate() {
        let top = trial_top_k(g, bank, t, i, cfg);
        log::info!("trial {}: {} hypotheses retained", t.id(), top.len());
        for (rank, (st, visits)) in top.into_iter().enumerate() {
            let p = Provenance { trial_id: t.id().to_string(), rank: rank as u32 + 1, score: st.score(), visits };
            space.insert(st.program, st.sexpr, Some(p));
        }
    }
    space
}
