//! Program semantics over a trial universe and the size-principle likelihood.

use crate::geometry::PrimitiveBank;
use crate::grammar::{log_gen, Expr, Grammar, GrammarError, Nt, Op, PartSet, RuleCounts};
use crate::token::Universe;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::sync::{Arc, RwLock};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("program denotes no tokens")]
    EmptyExtension,
    #[error("ill-typed program: {0}")]
    Type(String),
}

/// The set of tokens a program denotes, as sorted universe indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Extension {
    tokens: Vec<u32>,
}

impl Extension {
    pub fn from_sorted(tokens: Vec<u32>) -> Self {
        debug_assert!(tokens.windows(2).all(|w| w[0] < w[1]));
        Extension { tokens }
    }

    pub fn size(&self) -> usize {
        self.tokens.len()
    }

    pub fn tokens(&self) -> &[u32] {
        &self.tokens
    }

    pub fn contains(&self, id: u32) -> bool {
        self.tokens.binary_search(&id).is_ok()
    }
}

fn tyerr(m: &str) -> EvalError {
    EvalError::Type(m.to_string())
}

fn local(e: &Expr, u: &Universe) -> Result<u8, EvalError> {
    match e.op {
        Op::Part(p) => u.local(p).ok_or_else(|| tyerr("primitive outside the trial bank")),
        _ => Err(tyerr("expected a primitive")),
    }
}

fn mask_of(e: &Expr, u: &Universe) -> Result<u8, EvalError> {
    match &e.op {
        Op::PartSet(PartSet::All) => Ok(((1u16 << u.prims().len()) - 1) as u8),
        Op::PartSet(PartSet::Of(ps)) => ps.iter().try_fold(0u8, |m, &p| {
            u.local(p).map(|i| m | 1 << i).ok_or_else(|| tyerr("primitive outside the trial bank"))
        }),
        _ => Err(tyerr("expected a part set")),
    }
}

fn config_of(e: &Expr) -> Result<u16, EvalError> {
    match e.op {
        Op::Config(c) => Ok(c),
        _ => Err(tyerr("expected a configuration id")),
    }
}

fn normalize(mut v: Vec<u32>) -> Vec<u32> {
    v.sort_unstable();
    v.dedup();
    v
}

/// 2-part build handles denoted by an `ATTACH_SP` expression.
fn eval_pairs(e: &Expr, u: &Universe) -> Result<Vec<u32>, EvalError> {
    let (a, b) = (local(&e.kids[0], u)?, local(&e.kids[1], u)?);
    Ok(match e.op {
        Op::Attach => u.builds2_of(a, b).collect(),
        Op::AttachAt => u.build2(a, b, config_of(&e.kids[2])?).into_iter().collect(),
        _ => return Err(tyerr("expected attach or attach*")),
    })
}

/// Attach local primitive `d` to every pair in `pairs`: on either part with
/// any configuration, or on the last part with configuration `cfg`.
fn extend(pairs: &[u32], d: u8, cfg: Option<u16>, u: &Universe, out: &mut Vec<u32>) {
    for &b2 in pairs {
        match cfg {
            None => {
                for j in 0..2 {
                    out.extend(u.extensions(b2, d, j).flatten());
                }
            }
            Some(c) => out.extend(u.extension(b2, d, 1, c)),
        }
    }
}

fn eval_set(e: &Expr, x: Option<u8>, u: &Universe) -> Result<Vec<u32>, EvalError> {
    Ok(match e.op {
        Op::Attach | Op::AttachAt => match &e.kids[0].op {
            Op::Part(_) => normalize(eval_pairs(e, u)?.into_iter().map(|b2| u.token2(b2)).collect()),
            Op::Attach | Op::AttachAt => {
                let pairs = eval_pairs(&e.kids[0], u)?;
                let d = local(&e.kids[1], u)?;
                let cfg = if e.op == Op::AttachAt { Some(config_of(&e.kids[2])?) } else { None };
                let mut out = vec![];
                extend(&pairs, d, cfg, u, &mut out);
                normalize(out)
            }
            Op::Var => {
                let s = x.ok_or_else(|| tyerr("unbound variable"))?;
                match e.op {
                    Op::Attach => u.builds2_of(s, s).map(|b2| u.token2(b2)).collect::<Vec<_>>(),
                    _ => u.build2(s, s, config_of(&e.kids[2])?).map(|b2| u.token2(b2)).into_iter().collect(),
                }
            }
            _ => return Err(tyerr("bad attach operand")),
        },
        Op::Has => u.with_part(local(&e.kids[0], u)?).to_vec(),
        Op::OneOf => u.within(mask_of(&e.kids[0], u)?).to_vec(),
        Op::Single => vec![u.single(local(&e.kids[0], u)?)],
        Op::Union => {
            let mut a = eval_set(&e.kids[0], x, u)?;
            a.extend(eval_set(&e.kids[1], x, u)?);
            normalize(a)
        }
        Op::Map => {
            let mask = mask_of(&e.kids[1], u)?;
            let body = &e.kids[0];
            let mut out = vec![];
            for s in (0..u.prims().len() as u8).filter(|i| mask >> i & 1 == 1) {
                if body.op == Op::Attach && matches!(body.kids[0].op, Op::Attach | Op::AttachAt) {
                    // (attach ATTACH_SP x)
                    let pairs = eval_pairs(&body.kids[0], u)?;
                    extend(&pairs, s, None, u, &mut out);
                } else {
                    out.extend(eval_set(body, Some(s), u)?);
                }
            }
            normalize(out)
        }
        _ => return Err(tyerr("not a set expression")),
    })
}

/// Denotation of a complete program.
pub fn evaluate(p: &Expr, u: &Universe) -> Result<Extension, EvalError> {
    let tokens = match p.op {
        Op::RotateAll => {
            let base = eval_set(&p.kids[0], None, u)?;
            let mut all = Vec::with_capacity(base.len() * 4);
            for k in 0..4 {
                all.extend(base.iter().map(|&t| u.rotate(t, k)));
            }
            normalize(all)
        }
        Op::RotateAt => {
            let Op::Angle(a) = p.kids[1].op else {
                return Err(tyerr("expected an angle"));
            };
            normalize(eval_set(&p.kids[0], None, u)?.into_iter().map(|t| u.rotate(t, a)).collect())
        }
        _ => return Err(tyerr("a program starts with rotate or rotate*")),
    };
    if tokens.is_empty() {
        return Err(EvalError::EmptyExtension);
    }
    Ok(Extension::from_sorted(tokens))
}

/// `(1/T_l) · Σ_i [log 𝟙(x_i ∈ h) − log |h|]`.
pub fn log_likelihood(ext: &Extension, xs: &[u32], t_l: f64) -> f64 {
    if xs.iter().all(|&x| ext.contains(x)) {
        -(xs.len() as f64) * (ext.size() as f64).ln() / t_l
    } else {
        f64::NEG_INFINITY
    }
}

pub fn membership(y: u32, h: &Hypothesis) -> bool {
    h.extension.contains(y)
}

/// A program with its extension in one trial universe and the pieces of its
/// prior that let the prior be recomputed for any production probabilities.
#[derive(Debug, Clone)]
pub struct Hypothesis {
    pub program: Expr,
    pub sexpr: String,
    pub extension: Arc<Extension>,
    pub counts: RuleCounts,
    /// Log-probability contributed by the uniform (unfitted) rules.
    pub fixed: f64,
    pub log_prior_raw: f64,
}

impl Hypothesis {
    pub fn new(program: Expr, bank: &PrimitiveBank, u: &Universe, g: &Grammar) -> Result<Hypothesis, HypothesisError> {
        let (counts, fixed) = log_gen(&program, Nt::Start, u, 0)?;
        let extension = Arc::new(evaluate(&program, u)?);
        let sexpr = program.to_sexpr(bank);
        Ok(Hypothesis { log_prior_raw: g.log_prior_from(&counts, fixed), program, sexpr, extension, counts, fixed })
    }

    pub fn size(&self) -> usize {
        self.extension.size()
    }

    pub fn dump(&self, u: &Universe) -> HypothesisDump {
        HypothesisDump {
            program_sexpr: self.sexpr.clone(),
            size: self.size(),
            log_prior_raw: self.log_prior_raw,
            extension_sample: self.extension.tokens().iter().take(20).map(|&t| u.string(t).to_string()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum HypothesisError {
    #[error(transparent)]
    Grammar(#[from] GrammarError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// One line of the hypothesis JSONL dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisDump {
    pub program_sexpr: String,
    pub size: usize,
    pub log_prior_raw: f64,
    pub extension_sample: Vec<String>,
}

/// Concurrent memo from serialized program to extension.
#[derive(Debug, Default)]
pub struct ExtensionCache {
    map: RwLock<HashMap<String, Result<Arc<Extension>, EvalError>>>,
}

impl ExtensionCache {
    pub fn get_or_eval(&self, key: &str, p: &Expr, u: &Universe) -> Result<Arc<Extension>, EvalError> {
        if let Some(v) = self.map.read().expect("cache lock").get(key) {
            return v.clone();
        }
        let v = evaluate(p, u).map(Arc::new);
        self.map.write().expect("cache lock").entry(key.to_string()).or_insert(v).clone()
    }

    pub fn len(&self) -> usize {
        self.map.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests;
