//! Derivation probabilities and regeneration sites.

use super::expr::{Expr, Op, PartSet};
use super::{GrammarError, Nt, SetRule};
use crate::token::Universe;

/// `START` ×2, `ATTACH_SP` ×2, `SET` ×6.
pub const N_RULES: usize = 10;

/// How often each fitted rule is used in a derivation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct RuleCounts(pub [u16; N_RULES]);

impl RuleCounts {
    pub fn dot(&self, log_theta: &[f64; N_RULES]) -> f64 {
        self.0
            .iter()
            .zip(log_theta)
            .filter(|(&c, _)| c > 0)
            .map(|(&c, &l)| c as f64 * l)
            .sum()
    }

    fn add(&mut self, o: &RuleCounts) {
        for (a, b) in self.0.iter_mut().zip(o.0) {
            *a += b;
        }
    }

    fn bump(&mut self, i: usize) {
        self.0[i] += 1;
    }
}

fn nd(why: impl Into<String>) -> GrammarError {
    GrammarError::NotDerivable(why.into())
}

/// Which `SET` branch derives this node.
pub(crate) fn set_branch(e: &Expr) -> Option<SetRule> {
    match e.op {
        Op::Attach | Op::AttachAt => match e.kids.first().map(|k| &k.op) {
            Some(Op::Part(_)) => Some(SetRule::AttachSp),
            Some(Op::Attach | Op::AttachAt) => Some(SetRule::Extend),
            _ => None,
        },
        Op::Has | Op::OneOf => Some(SetRule::Dp),
        Op::Map => Some(SetRule::Var),
        Op::Single => Some(SetRule::Single),
        Op::Union => Some(SetRule::Union),
        _ => None,
    }
}

fn local_part(e: &Expr, u: &Universe) -> Result<u8, GrammarError> {
    match e.op {
        Op::Part(p) => u.local(p).ok_or_else(|| nd(format!("primitive {p} is not in the trial bank"))),
        _ => Err(nd("expected a primitive")),
    }
}

/// Number of `CONFIG` choices for each child slot of `e` (nonzero only for
/// the config slot of an `attach*`). A pair with no configurations still
/// admits the single, empty, choice 1.
pub(crate) fn config_range(e: &Expr, nt: Nt, u: &Universe) -> Result<u16, GrammarError> {
    let n = match nt {
        Nt::AttachSp => u.n_configs(local_part(&e.kids[0], u)?, local_part(&e.kids[1], u)?),
        Nt::Extend => u.n_configs(local_part(&e.kids[0].kids[1], u)?, local_part(&e.kids[1], u)?),
        Nt::VBody => u.kmax(),
        _ => return Err(nd("no configuration slot")),
    };
    Ok(n.max(1))
}

/// Nonterminals of the children of `e` when `e` is derived from `nt`;
/// `None` marks the bound variable.
pub(crate) fn child_nts(e: &Expr, nt: Nt) -> Result<Vec<Option<Nt>>, GrammarError> {
    use Nt::*;
    let kinds = |k: &[Option<Nt>]| -> Result<Vec<Option<Nt>>, GrammarError> {
        if k.len() == e.kids.len() {
            Ok(k.to_vec())
        } else {
            Err(nd("wrong arity"))
        }
    };
    match (nt, &e.op) {
        (Start, Op::RotateAll) => kinds(&[Some(Set)]),
        (Start, Op::RotateAt) => kinds(&[Some(Set), Some(Angle)]),
        (Set, _) => match set_branch(e) {
            Some(SetRule::AttachSp) => child_nts(e, AttachSp),
            Some(SetRule::Extend) => child_nts(e, Extend),
            Some(SetRule::Dp) => child_nts(e, Dp),
            Some(SetRule::Var) => child_nts(e, Var),
            Some(SetRule::Single) => kinds(&[Some(Part)]),
            Some(SetRule::Union) => kinds(&[Some(Set), Some(Set)]),
            None => Err(nd("not a SET expression")),
        },
        (AttachSp, Op::Attach) => kinds(&[Some(Part), Some(Part)]),
        (AttachSp, Op::AttachAt) => kinds(&[Some(Part), Some(Part), Some(Config)]),
        (Extend, Op::Attach) => kinds(&[Some(AttachSp), Some(Part)]),
        (Extend, Op::AttachAt) => kinds(&[Some(AttachSp), Some(Part), Some(Config)]),
        (Dp, Op::Has) => kinds(&[Some(Part)]),
        (Dp, Op::OneOf) => kinds(&[Some(PartSet)]),
        (Var, Op::Map) => kinds(&[Some(VBody), Some(PartSet)]),
        (VBody, Op::Attach) if e.kids.first().map(|k| &k.op) == Some(&Op::Var) => kinds(&[None, None]),
        (VBody, Op::Attach) => kinds(&[Some(AttachSp), None]),
        (VBody, Op::AttachAt) => kinds(&[None, None, Some(Config)]),
        (Part | PartSet | Config | Angle, _) => kinds(&[]),
        _ => Err(nd(format!("{:?} cannot derive {:?}", nt, e.op))),
    }
}

/// Rule counts and fixed log-probability of deriving `e` from `nt` in the
/// universe's bank. `cfg_n` is the number of `CONFIG` choices when
/// `nt == Config`.
pub fn log_gen(e: &Expr, nt: Nt, u: &Universe, cfg_n: u16) -> Result<(RuleCounts, f64), GrammarError> {
    let mut counts = RuleCounts::default();
    let mut fixed = 0.0;
    let k = u.prims().len();
    match (nt, &e.op) {
        (Nt::Start, Op::RotateAll) => counts.bump(0),
        (Nt::Start, Op::RotateAt) => counts.bump(1),
        (Nt::Set, _) => {
            let b = set_branch(e).ok_or_else(|| nd("not a SET expression"))?;
            counts.bump(4 + b as usize);
            let sub = match b {
                SetRule::AttachSp => Some(Nt::AttachSp),
                SetRule::Extend => Some(Nt::Extend),
                SetRule::Dp => Some(Nt::Dp),
                SetRule::Var => Some(Nt::Var),
                _ => None,
            };
            if let Some(sub) = sub {
                let (c, f) = log_gen(e, sub, u, cfg_n)?;
                counts.add(&c);
                return Ok((counts, fixed + f));
            }
        }
        (Nt::AttachSp, Op::Attach) => counts.bump(2),
        (Nt::AttachSp, Op::AttachAt) => counts.bump(3),
        (Nt::Extend, Op::Attach | Op::AttachAt) => fixed += 0.5f64.ln(),
        (Nt::Dp, Op::Has | Op::OneOf) => fixed += 0.5f64.ln(),
        (Nt::Var, Op::Map) => {}
        (Nt::VBody, Op::Attach | Op::AttachAt) => fixed += (1.0f64 / 3.0).ln(),
        (Nt::Part, Op::Part(_)) => {
            local_part(e, u)?;
            fixed += -(k as f64).ln();
        }
        (Nt::PartSet, Op::PartSet(s)) => {
            if let PartSet::Of(ps) = s {
                if ps.is_empty() || ps.len() >= k {
                    return Err(nd("a part set must be a proper nonempty subset, or S"));
                }
                for &p in ps {
                    u.local(p).ok_or_else(|| nd(format!("primitive {p} is not in the trial bank")))?;
                }
            }
            fixed += -(((1u32 << k) - 1) as f64).ln();
        }
        (Nt::Config, Op::Config(c)) => {
            if *c == 0 || *c > cfg_n {
                return Err(nd(format!("configuration {c} out of range 1..{cfg_n}")));
            }
            fixed += -(cfg_n as f64).ln();
        }
        (Nt::Angle, Op::Angle(_)) => fixed += 0.25f64.ln(),
        _ => return Err(nd(format!("{:?} cannot derive {:?}", nt, e.op))),
    }
    let kid_nts = child_nts(e, nt)?;
    for (kid, knt) in e.kids.iter().zip(kid_nts) {
        let Some(knt) = knt else {
            if kid.op != Op::Var {
                return Err(nd("expected the bound variable"));
            }
            continue;
        };
        let n = if knt == Nt::Config { config_range(e, nt, u)? } else { 0 };
        let (c, f) = log_gen(kid, knt, u, n)?;
        counts.add(&c);
        fixed += f;
    }
    Ok((counts, fixed))
}

/// A place where the proposal may regenerate: a node path and the
/// nonterminal it is regenerated from. Chain rules such as
/// `SET -> ATTACH_SP` give one node two sites.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Site {
    pub path: Vec<u8>,
    pub nt: Nt,
    /// `CONFIG` range when `nt == Config`.
    pub cfg_n: u16,
}

/// All regeneration sites of a derivable program, in pre-order.
pub fn sites(e: &Expr, u: &Universe) -> Result<Vec<Site>, GrammarError> {
    let mut out = vec![];
    collect(e, Nt::Start, 0, &mut vec![], u, &mut out)?;
    Ok(out)
}

fn collect(e: &Expr, nt: Nt, cfg_n: u16, path: &mut Vec<u8>, u: &Universe, out: &mut Vec<Site>) -> Result<(), GrammarError> {
    out.push(Site { path: path.clone(), nt, cfg_n });
    let mut eff = nt;
    if nt == Nt::Set {
        let chained = match set_branch(e) {
            Some(SetRule::AttachSp) => Some(Nt::AttachSp),
            Some(SetRule::Extend) => Some(Nt::Extend),
            Some(SetRule::Dp) => Some(Nt::Dp),
            Some(SetRule::Var) => Some(Nt::Var),
            _ => None,
        };
        if let Some(c) = chained {
            out.push(Site { path: path.clone(), nt: c, cfg_n: 0 });
            eff = c;
        }
    }
    for (i, (kid, knt)) in e.kids.iter().zip(child_nts(e, eff)?).enumerate() {
        if let Some(knt) = knt {
            let n = if knt == Nt::Config { config_range(e, eff, u)? } else { 0 };
            path.push(i as u8);
            collect(kid, knt, n, path, u, out)?;
            path.pop();
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{default_bank, AttachmentTable, PrimId, PrimitiveBank};
    use crate::grammar::{default_grammar, parse_program, Grammar, Lesions, Theta};

    fn setup() -> (PrimitiveBank, Universe) {
        let bank = default_bank();
        let table = AttachmentTable::build(&bank);
        let prims: Vec<PrimId> = ["p2", "p4", "p5", "p6"].iter().map(|n| bank.lookup(n).unwrap()).collect();
        let u = Universe::build(&bank, &table, &prims).unwrap();
        (bank, u)
    }

    #[test]
    fn prior_is_the_product_of_rule_probabilities() {
        let (bank, u) = setup();
        let g = default_grammar();
        // START→rotate (1/2) · SET→DP (1/6) · DP→has (1/2) · PART (1/4)
        let p = parse_program("(rotate (has p2))", &bank).unwrap();
        let want = (0.5f64 * (1.0 / 6.0) * 0.5 * 0.25).ln();
        assert!((g.log_prior(&p, &u, 1.0).unwrap() - want).abs() < 1e-12);
        // tempering divides the log prior
        assert!((g.log_prior(&p, &u, 4.0).unwrap() - want / 4.0).abs() < 1e-12);

        let n = u.n_configs(u.local(bank.lookup("p2").unwrap()).unwrap(), u.local(bank.lookup("p4").unwrap()).unwrap());
        let p = parse_program("(rotate* (attach* p2 p4 1) 180)", &bank).unwrap();
        let want = (0.5f64 * (1.0 / 6.0) * 0.5 / 16.0 / n as f64 * 0.25).ln();
        assert!((g.log_prior(&p, &u, 1.0).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn lesioned_constructs_are_not_derivable() {
        let (bank, u) = setup();
        let g = default_grammar().lesion(Lesions::NO_DP).unwrap();
        let p = parse_program("(rotate (has p2))", &bank).unwrap();
        assert!(matches!(g.log_prior(&p, &u, 1.0), Err(GrammarError::NotDerivable(_))));
        let g = default_grammar().lesion(Lesions::NO_VAR).unwrap();
        let p = parse_program("(rotate (map (lambda x (attach x x)) S))", &bank).unwrap();
        assert!(g.log_prior(&p, &u, 1.0).is_err());
    }

    #[test]
    fn foreign_primitives_and_bad_configs_are_not_derivable() {
        let (bank, u) = setup();
        let g = Grammar::new(Theta::default(), Lesions::NONE).unwrap();
        for text in ["(rotate (has p1))", "(rotate (attach* p2 p4 99))", "(rotate (oneof (set p2 p4 p5 p6)))"] {
            let p = parse_program(text, &bank).unwrap();
            assert!(g.log_prior(&p, &u, 1.0).is_err(), "{text}");
        }
    }

    #[test]
    fn chain_rules_give_two_sites() {
        let (bank, u) = setup();
        let p = parse_program("(rotate* (attach* p2 p4 1) 90)", &bank).unwrap();
        let s = sites(&p, &u).unwrap();
        let nts: Vec<Nt> = s.iter().map(|x| x.nt).collect();
        assert_eq!(nts, vec![Nt::Start, Nt::Set, Nt::AttachSp, Nt::Part, Nt::Part, Nt::Config, Nt::Angle]);
    }
}
