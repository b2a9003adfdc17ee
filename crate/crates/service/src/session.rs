use crate::{ApiError, Engine};
use forge_core::grammar::Lesions;
use forge_core::inference::{trial_top_k, ChainState, FitParams, HypothesisSpace, Posterior, SpaceConfig, TrialView};
use forge_core::token::Universe;
use forge_core::trials::{ResolvedTrial, Trial};
use serde_json::{json, Value};
use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex, RwLock};

/// Posterior over the session's exemplars at one revision.
pub struct Cached {
    pub space: Arc<HypothesisSpace>,
    pub view: TrialView,
    pub post: Posterior<f64>,
    pub revision: u64,
}

pub struct Session {
    pub id: String,
    pub bank: Vec<String>,
    pub universe: Arc<Universe>,
    pub exemplars: Vec<u32>,
    pub params_name: String,
    pub params: FitParams,
    /// Bumped on every exemplar change; stale job results are discarded.
    pub revision: u64,
    /// Hypotheses found by this session's own chains.
    pub extra: HypothesisSpace,
    pub jobs: HashMap<u64, Arc<Job>>,
    cache: Option<Arc<Cached>>,
    next_job: u64,
}

impl Session {
    pub fn new(id: String, bank: Vec<String>, universe: Arc<Universe>, params_name: String, params: FitParams) -> Session {
        Session {
            id,
            bank,
            universe,
            exemplars: vec![],
            params_name,
            params,
            revision: 0,
            extra: HypothesisSpace::default(),
            jobs: HashMap::new(),
            cache: None,
            next_job: 1,
        }
    }

    pub fn describe(&self) -> Value {
        json!({
            "id": self.id,
            "bank": self.bank,
            "universe_size": self.universe.len(),
            "exemplars": self.exemplars.iter().map(|&t| self.universe.string(t)).collect::<Vec<_>>(),
            "params": self.params_name,
            "revision": self.revision,
            "session_hypotheses": self.extra.len(),
            "cached": self.cache.is_some(),
        })
    }

    pub fn lookup(&self, s: &str, engine: &Engine) -> Result<u32, ApiError> {
        self.universe.lookup(s, &engine.bank, &engine.table).map_err(|e| ApiError::BadRequest(e.to_string()))
    }

    fn touch(&mut self) {
        self.revision += 1;
        self.cache = None;
    }

    pub fn add_exemplar(&mut self, s: &str, engine: &Engine) -> Result<(usize, String), ApiError> {
        let t = self.lookup(s, engine)?;
        self.exemplars.push(t);
        self.touch();
        Ok((self.exemplars.len() - 1, self.universe.string(t).to_string()))
    }

    pub fn remove_exemplar(&mut self, i: usize) -> Result<(), ApiError> {
        if i >= self.exemplars.len() {
            return Err(ApiError::NotFound(format!("exemplar {i}")));
        }
        self.exemplars.remove(i);
        self.touch();
        Ok(())
    }

    pub fn posterior(&mut self, engine: &Engine) -> Result<Arc<Cached>, ApiError> {
        if self.exemplars.is_empty() {
            return Err(ApiError::NoExemplars);
        }
        if let Some(c) = &self.cache {
            return Ok(c.clone());
        }
        let space = if self.extra.is_empty() {
            engine.space.clone()
        } else {
            let mut s = (*engine.space).clone();
            s.merge(self.extra.clone());
            Arc::new(s)
        };
        let view = TrialView::from_parts(&space, &self.id, self.universe.clone(), &self.exemplars, &[]);
        let post = view.posterior::<f64>(&self.params, Lesions::NONE)?;
        let c = Arc::new(Cached { space, view, post, revision: self.revision });
        self.cache = Some(c.clone());
        Ok(c)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum JobStatus {
    Running,
    Done { added: usize },
    /// Exemplars changed while the chains ran; results were dropped.
    Stale,
}

pub struct Job {
    pub id: u64,
    pub revision: u64,
    pub chains: usize,
    pub chains_done: AtomicUsize,
    pub status: Mutex<JobStatus>,
}

impl Job {
    pub fn describe(&self) -> Value {
        let (status, added) = match &*self.status.lock().unwrap_or_else(|e| e.into_inner()) {
            JobStatus::Running => ("running", None),
            JobStatus::Done { added } => ("done", Some(*added)),
            JobStatus::Stale => ("stale", None),
        };
        json!({
            "job": self.id,
            "status": status,
            "chains": self.chains,
            "chains_done": self.chains_done.load(Ordering::Relaxed),
            "revision": self.revision,
            "added": added,
            "version": crate::VERSION,
        })
    }
}

/// Run fresh chains on the session's current exemplars in the background.
/// Finished chains are merged into the session's own hypotheses if the
/// exemplars have not changed meanwhile.
pub fn start_job(s: Arc<RwLock<Session>>, engine: Arc<Engine>) -> Result<u64, ApiError> {
    let (job, rt) = {
        let mut g = s.write().unwrap_or_else(|e| e.into_inner());
        if g.exemplars.is_empty() {
            return Err(ApiError::NoExemplars);
        }
        let id = g.next_job;
        g.next_job += 1;
        let job = Arc::new(Job {
            id,
            revision: g.revision,
            chains: engine.fresh_chains,
            chains_done: AtomicUsize::new(0),
            status: Mutex::new(JobStatus::Running),
        });
        g.jobs.insert(id, job.clone());
        let trial = Trial {
            trial_id: g.id.clone(),
            bank: g.bank.clone(),
            exemplars: g.exemplars.iter().map(|&t| g.universe.string(t).to_string()).collect(),
            test_items: vec![],
        };
        let rt = ResolvedTrial { trial, universe: g.universe.clone(), exemplars: g.exemplars.clone(), items: vec![] };
        (job, rt)
    };
    let id = job.id;
    std::thread::spawn(move || {
        let cfg = SpaceConfig { chains: 1, steps: engine.fresh_steps, top_k: engine.fresh_top_k, seed: engine.seed };
        let mut best: HashMap<String, (ChainState, u64)> = HashMap::new();
        for c in 0..job.chains {
            for (st, v) in trial_top_k(&engine.grammar, &engine.bank, &rt, c, &cfg) {
                best.entry(st.sexpr.clone()).and_modify(|e| e.1 += v).or_insert((st, v));
            }
            job.chains_done.fetch_add(1, Ordering::Relaxed);
        }
        let mut ranked: Vec<(ChainState, u64)> = best.into_values().collect();
        ranked.sort_by(|a, b| b.0.score().total_cmp(&a.0.score()).then_with(|| a.0.sexpr.cmp(&b.0.sexpr)));
        ranked.truncate(engine.fresh_top_k);
        let mut g = s.write().unwrap_or_else(|e| e.into_inner());
        let status = if g.revision == job.revision {
            let before = g.extra.len();
            for (st, _) in ranked {
                g.extra.insert(st.program, st.sexpr, None);
            }
            let added = g.extra.len() - before;
            g.cache = None;
            JobStatus::Done { added }
        } else {
            JobStatus::Stale
        };
        *job.status.lock().unwrap_or_else(|e| e.into_inner()) = status;
    });
    Ok(id)
}
