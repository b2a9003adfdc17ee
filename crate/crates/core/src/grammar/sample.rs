//! Forward sampling of derivations.

use super::expr::{Expr, Op, PartSet};
use super::{Grammar, GrammarError, Nt, SetRule};
use crate::token::Universe;
use rand::Rng;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SampleStats {
    /// Derivations thrown away for exceeding the depth cap.
    pub overflows: u64,
}

fn pick<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let mut x = rng.gen::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            if x < w {
                return i;
            }
            x -= w;
        }
    }
    weights.iter().rposition(|&w| w > 0.0).expect("some positive weight")
}

fn part_expr<R: Rng + ?Sized>(u: &Universe, rng: &mut R) -> Expr {
    Expr::part(u.prims()[rng.gen_range(0..u.prims().len())])
}

fn local_of(e: &Expr, u: &Universe) -> u8 {
    match e.op {
        Op::Part(p) => u.local(p).expect("sampled from the bank"),
        _ => unreachable!("operand is a primitive"),
    }
}

/// Sample a subtree from `nt` whose depth is at most `budget`.
pub fn sample_from<R: Rng + ?Sized>(
    g: &Grammar,
    u: &Universe,
    nt: Nt,
    cfg_n: u16,
    budget: usize,
    rng: &mut R,
) -> Result<Expr, GrammarError> {
    let over = || GrammarError::DepthExceeded(budget);
    if budget == 0 {
        return Err(over());
    }
    let t = g.theta();
    Ok(match nt {
        Nt::Start => {
            let body = sample_from(g, u, Nt::Set, 0, budget - 1, rng)?;
            if rng.gen::<f64>() < t.p_ri {
                Expr::rotate_all(body)
            } else {
                Expr::rotate_at(body, rng.gen_range(0..4))
            }
        }
        Nt::Set => match SetRule::ALL[pick(&t.set, rng)] {
            SetRule::AttachSp => sample_from(g, u, Nt::AttachSp, 0, budget, rng)?,
            SetRule::Extend => sample_from(g, u, Nt::Extend, 0, budget, rng)?,
            SetRule::Dp => sample_from(g, u, Nt::Dp, 0, budget, rng)?,
            SetRule::Var => sample_from(g, u, Nt::Var, 0, budget, rng)?,
            SetRule::Single => {
                Expr::new(Op::Single, vec![part_expr(u, rng)])
            }
            SetRule::Union => {
                let a = sample_from(g, u, Nt::Set, 0, budget - 1, rng)?;
                let b = sample_from(g, u, Nt::Set, 0, budget - 1, rng)?;
                Expr::union(a, b)
            }
        },
        Nt::AttachSp => {
            let (a, b) = (part_expr(u, rng), part_expr(u, rng));
            if rng.gen::<f64>() < t.p_ai {
                Expr::attach(a, b)
            } else {
                let n = u.n_configs(local_of(&a, u), local_of(&b, u)).max(1);
                Expr::attach_at(a, b, rng.gen_range(1..=n))
            }
        }
        Nt::Extend => {
            let sp = sample_from(g, u, Nt::AttachSp, 0, budget - 1, rng)?;
            let d = part_expr(u, rng);
            if rng.gen::<bool>() {
                Expr::attach(sp, d)
            } else {
                let n = u.n_configs(local_of(&sp.kids[1], u), local_of(&d, u)).max(1);
                Expr::attach_at(sp, d, rng.gen_range(1..=n))
            }
        }
        Nt::Dp => {
            if rng.gen::<bool>() {
                Expr::new(Op::Has, vec![part_expr(u, rng)])
            } else {
                Expr::new(Op::OneOf, vec![Expr::part_set(sample_part_set(u, rng))])
            }
        }
        Nt::Var => {
            let body = sample_from(g, u, Nt::VBody, 0, budget - 1, rng)?;
            Expr::new(Op::Map, vec![body, Expr::part_set(sample_part_set(u, rng))])
        }
        Nt::VBody => {
            match rng.gen_range(0..3) {
                0 => Expr::attach(Expr::var(), Expr::var()),
                1 => Expr::attach_at(Expr::var(), Expr::var(), rng.gen_range(1..=u.kmax().max(1))),
                _ => Expr::attach(sample_from(g, u, Nt::AttachSp, 0, budget - 1, rng)?, Expr::var()),
            }
        }
        Nt::Part => part_expr(u, rng),
        Nt::PartSet => Expr::part_set(sample_part_set(u, rng)),
        Nt::Config => Expr::config(rng.gen_range(1..=cfg_n.max(1))),
        Nt::Angle => Expr::angle(rng.gen_range(0..4)),
    })
    .and_then(|e: Expr| if e.depth() <= budget { Ok(e) } else { Err(over()) })
}

fn sample_part_set<R: Rng + ?Sized>(u: &Universe, rng: &mut R) -> PartSet {
    let k = u.prims().len();
    let full = (1u32 << k) - 1;
    let mask = rng.gen_range(1..=full);
    if mask == full {
        PartSet::All
    } else {
        PartSet::Of((0..k).filter(|i| mask >> i & 1 == 1).map(|i| u.prims()[i]).collect())
    }
}

/// A complete program from `START`, resampling derivations that exceed the
/// grammar's depth cap.
pub fn sample_program<R: Rng + ?Sized>(g: &Grammar, u: &Universe, rng: &mut R, stats: &mut SampleStats) -> Expr {
    loop {
        match sample_from(g, u, Nt::Start, 0, g.max_depth, rng) {
            Ok(e) => return e,
            Err(_) => {
                stats.overflows += 1;
                if stats.overflows % 10_000 == 0 {
                    log::warn!("{} derivations exceeded depth {}", stats.overflows, g.max_depth);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{default_bank, AttachmentTable, PrimId};
    use crate::grammar::{default_grammar, Lesions, Theta};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn universe() -> Universe {
        let bank = default_bank();
        let table = AttachmentTable::build(&bank);
        let prims: Vec<PrimId> = ["p2", "p4", "p5", "p6"].iter().map(|n| bank.lookup(n).unwrap()).collect();
        Universe::build(&bank, &table, &prims).unwrap()
    }

    #[test]
    fn samples_are_derivable_and_within_depth() {
        let u = universe();
        let g = default_grammar();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut stats = SampleStats::default();
        for _ in 0..2000 {
            let e = sample_program(&g, &u, &mut rng, &mut stats);
            assert!(e.depth() <= g.max_depth);
            assert!(g.log_prior(&e, &u, 1.0).is_ok());
        }
    }

    #[test]
    fn forced_rotate_all_and_lesions_hold_in_samples() {
        let u = universe();
        let g = Grammar::new(Theta { p_ri: 1.0, ..Theta::default() }, Lesions::NO_VAR).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut stats = SampleStats::default();
        for _ in 0..2000 {
            let e = sample_program(&g, &u, &mut rng, &mut stats);
            assert_eq!(e.op, Op::RotateAll);
            assert!(!e.any(&|n| n.op == Op::Map));
        }
        let g = default_grammar().lesion(Lesions::NO_DP).unwrap();
        for _ in 0..2000 {
            let e = sample_program(&g, &u, &mut rng, &mut stats);
            assert!(!e.any(&|n| matches!(n.op, Op::Has | Op::OneOf)));
        }
    }
}
