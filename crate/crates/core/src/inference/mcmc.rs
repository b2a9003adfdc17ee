//! Tree-regeneration Metropolis-Hastings over programs.
//!
//! A proposal picks one regeneration site uniformly and redraws its subtree
//! from the grammar. The forward and reverse proposal densities sum over every
//! site whose regeneration could produce the move, so chain rules that give a
//! node two sites are accounted for exactly. Subtrees that would exceed the
//! grammar's depth cap are proposals outside the support and are rejected.
//!
//! Until the chain first reaches a program consistent with every exemplar,
//! states are compared by a surrogate that charges a fixed penalty per
//! uncovered exemplar. Burn-in states have zero posterior and are never
//! retained; from the first consistent state on the chain is exact.

use crate::geometry::PrimitiveBank;
use crate::grammar::{log_gen, sample_from, sample_program, sites, Expr, Grammar, Nt, SampleStats, Site};
use crate::interpreter::{evaluate, log_likelihood};
use crate::token::Universe;
use rand::Rng;
use std::collections::HashMap;

/// Prior and likelihood of a visited program at unit temperatures.
#[derive(Debug, Clone)]
pub struct ChainState {
    pub program: Expr,
    pub sexpr: String,
    pub log_prior: f64,
    pub log_lik: f64,
    pub visits: u64,
}

impl ChainState {
    pub fn score(&self) -> f64 {
        self.log_prior + self.log_lik
    }
}

#[derive(Debug, Clone, Default)]
pub struct ChainResult {
    /// Distinct visited programs in order of first visit.
    pub states: Vec<ChainState>,
    /// Index into `states` after each step, starting with the initial state.
    pub trace: Vec<u32>,
    pub accepted: u64,
    pub depth_rejections: u64,
    pub init_overflows: u64,
}

/// How a program's extension relates to the exemplars.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fit {
    pub log_lik: f64,
    pub covered: u32,
    /// 0 when the program does not evaluate to a nonempty set.
    pub size: u32,
}

/// Per-chain memo of program fits keyed by s-expression.
pub type LikMemo = HashMap<String, Fit>;

const UNCOVERED_PENALTY: f64 = 5.0;

struct Scorer<'a> {
    g: &'a Grammar,
    u: &'a Universe,
    bank: &'a PrimitiveBank,
    xs: &'a [u32],
}

impl Scorer<'_> {
    fn log_prior(&self, e: &Expr) -> f64 {
        if e.depth() > self.g.max_depth {
            return f64::NEG_INFINITY;
        }
        match log_gen(e, Nt::Start, self.u, 0) {
            Ok((c, f)) => self.g.log_prior_from(&c, f),
            Err(_) => f64::NEG_INFINITY,
        }
    }

    fn fit(&self, e: &Expr, key: &str, memo: &mut LikMemo) -> Fit {
        if let Some(&v) = memo.get(key) {
            return v;
        }
        let v = match evaluate(e, self.u) {
            Ok(ext) => Fit {
                log_lik: log_likelihood(&ext, self.xs, 1.0),
                covered: self.xs.iter().filter(|&&x| ext.contains(x)).count() as u32,
                size: ext.size() as u32,
            },
            Err(_) => Fit { log_lik: f64::NEG_INFINITY, covered: 0, size: 0 },
        };
        memo.insert(key.to_string(), v);
        v
    }

    fn log_lik(&self, e: &Expr, key: &str, memo: &mut LikMemo) -> f64 {
        self.fit(e, key, memo).log_lik
    }

    /// Burn-in surrogate: size-principle term for covered exemplars, a
    /// penalty worse than any member's for each uncovered one.
    fn surrogate(&self, f: Fit) -> f64 {
        if f.size == 0 {
            return f64::NEG_INFINITY;
        }
        let miss = self.xs.len() as f64 - f.covered as f64;
        -(f.covered as f64) * (f.size as f64).ln() - miss * (UNCOVERED_PENALTY + (self.u.len() as f64).ln())
    }

    fn gen_logp(&self, sub: &Expr, site: &Site) -> f64 {
        match log_gen(sub, site.nt, self.u, site.cfg_n) {
            Ok((c, f)) => self.g.log_prior_from(&c, f),
            Err(_) => f64::NEG_INFINITY,
        }
    }
}

/// Deepest path below which all differences between `a` and `b` lie, or
/// `None` when the trees are equal.
fn diff_root(a: &Expr, b: &Expr) -> Option<Vec<u8>> {
    if a == b {
        return None;
    }
    let mut path = vec![];
    let (mut x, mut y) = (a, b);
    loop {
        if x.op != y.op || x.kids.len() != y.kids.len() {
            return Some(path);
        }
        let differing: Vec<usize> = (0..x.kids.len()).filter(|&i| x.kids[i] != y.kids[i]).collect();
        if differing.len() != 1 {
            return Some(path);
        }
        let i = differing[0];
        path.push(i as u8);
        x = &x.kids[i];
        y = &y.kids[i];
    }
}

/// `log q(to | from)`: total probability of proposing `to` from `from`.
fn log_q(sc: &Scorer, from_sites: &[Site], to: &Expr, diff: &[u8]) -> f64 {
    let n = from_sites.len() as f64;
    let terms: Vec<f64> = from_sites
        .iter()
        .filter(|s| diff.starts_with(&s.path))
        .map(|s| sc.gen_logp(to.at(&s.path), s) - n.ln())
        .collect();
    crate::num::log_sum_exp(&terms)
}

fn initial_state<R: Rng + ?Sized>(sc: &Scorer, memo: &mut LikMemo, rng: &mut R, stats: &mut SampleStats) -> Expr {
    let mut last = None;
    for _ in 0..1000 {
        let e = sample_program(sc.g, sc.u, rng, stats);
        let key = e.to_sexpr(sc.bank);
        if sc.log_lik(&e, &key, memo) > f64::NEG_INFINITY {
            return e;
        }
        last = Some(e);
    }
    last.expect("at least one draw")
}

/// Run one chain for `steps` proposals on exemplars `xs`.
pub fn mcmc_chain<R: Rng + ?Sized>(
    g: &Grammar,
    bank: &PrimitiveBank,
    u: &Universe,
    xs: &[u32],
    steps: usize,
    memo: &mut LikMemo,
    rng: &mut R,
) -> ChainResult {
    let sc = Scorer { g, u, bank, xs };
    let mut stats = SampleStats::default();
    let mut res = ChainResult::default();
    let mut index: HashMap<String, u32> = HashMap::new();

    let mut visit = |e: &Expr, key: String, lp: f64, ll: f64, res: &mut ChainResult| -> u32 {
        let id = *index.entry(key.clone()).or_insert_with(|| {
            res.states.push(ChainState { program: e.clone(), sexpr: key, log_prior: lp, log_lik: ll, visits: 0 });
            res.states.len() as u32 - 1
        });
        res.states[id as usize].visits += 1;
        res.trace.push(id);
        id
    };

    let mut cur = initial_state(&sc, memo, rng, &mut stats);
    res.init_overflows = stats.overflows;
    let mut cur_key = cur.to_sexpr(bank);
    let mut cur_lp = sc.log_prior(&cur);
    let mut cur_ll = sc.log_lik(&cur, &cur_key, memo);
    let mut cur_sites = sites(&cur, u).unwrap_or_default();
    let mut cur_id = visit(&cur, cur_key.clone(), cur_lp, cur_ll, &mut res);

    for _ in 0..steps {
        if cur_sites.is_empty() {
            break;
        }
        let site = &cur_sites[rng.gen_range(0..cur_sites.len())];
        let budget = g.max_depth.saturating_sub(site.path.len());
        let Ok(sub) = sample_from(g, u, site.nt, site.cfg_n, budget, rng) else {
            res.depth_rejections += 1;
            bump(&mut res, cur_id);
            continue;
        };
        let prop = cur.replaced(&site.path, sub);
        let Some(diff) = diff_root(&cur, &prop) else {
            bump(&mut res, cur_id);
            continue;
        };
        let lp = sc.log_prior(&prop);
        if lp == f64::NEG_INFINITY {
            bump(&mut res, cur_id);
            continue;
        }
        let key = prop.to_sexpr(bank);
        let fit = sc.fit(&prop, &key, memo);
        let ll = fit.log_lik;
        let prop_sites = match sites(&prop, u) {
            Ok(s) => s,
            Err(_) => {
                bump(&mut res, cur_id);
                continue;
            }
        };
        let (new_l, old_l) = if cur_ll == f64::NEG_INFINITY {
            (sc.surrogate(fit), sc.surrogate(sc.fit(&cur, &cur_key, memo)))
        } else {
            (ll, cur_ll)
        };
        let accept = if new_l == f64::NEG_INFINITY {
            false
        } else if old_l == f64::NEG_INFINITY {
            true
        } else {
            let fwd = log_q(&sc, &cur_sites, &prop, &diff);
            let rev = log_q(&sc, &prop_sites, &cur, &diff);
            let log_alpha = (lp + new_l + rev) - (cur_lp + old_l + fwd);
            log_alpha >= 0.0 || rng.gen::<f64>().ln() < log_alpha
        };
        if accept {
            res.accepted += 1;
            cur = prop;
            cur_key = key;
            cur_lp = lp;
            cur_ll = ll;
            cur_sites = prop_sites;
            cur_id = visit(&cur, cur_key.clone(), cur_lp, cur_ll, &mut res);
        } else {
            bump(&mut res, cur_id);
        }
    }
    res
}

fn bump(res: &mut ChainResult, id: u32) {
    res.states[id as usize].visits += 1;
    res.trace.push(id);
}
