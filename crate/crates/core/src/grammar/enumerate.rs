//! Exhaustive enumeration of all derivations up to a depth.

use super::expr::{Expr, Op, PartSet};
use super::{Grammar, Nt, SetRule};
use crate::token::Universe;

/// Every program derivable from `START` with depth at most `max_depth`,
/// with its probability computed independently of [`super::log_gen`].
pub fn enumerate_programs(g: &Grammar, u: &Universe, max_depth: usize) -> Vec<(Expr, f64)> {
    go(g, u, Nt::Start, max_depth).into_iter().filter(|(_, p)| *p > 0.0).map(|(e, p)| (e, p.ln())).collect()
}

fn part_sets(u: &Universe) -> Vec<PartSet> {
    let k = u.prims().len();
    let full = (1u32 << k) - 1;
    (1..=full)
        .map(|m| {
            if m == full {
                PartSet::All
            } else {
                PartSet::Of((0..k).filter(|i| m >> i & 1 == 1).map(|i| u.prims()[i]).collect())
            }
        })
        .collect()
}

fn go(g: &Grammar, u: &Universe, nt: Nt, budget: usize) -> Vec<(Expr, f64)> {
    let t = g.theta();
    let k = u.prims().len();
    let kf = k as f64;
    let mut out = vec![];
    if budget == 0 {
        return out;
    }
    let parts = || (0..k as u8).map(|i| (i, Expr::part(u.prims()[i as usize])));
    match nt {
        Nt::Start => {
            for (body, p) in go(g, u, Nt::Set, budget - 1) {
                out.push((Expr::rotate_all(body.clone()), p * t.p_ri));
                for a in 0..4 {
                    out.push((Expr::rotate_at(body.clone(), a), p * (1.0 - t.p_ri) / 4.0));
                }
            }
        }
        Nt::Set => {
            for r in SetRule::ALL {
                let w = t.set[r as usize];
                if w == 0.0 {
                    continue;
                }
                let sub = match r {
                    SetRule::AttachSp => go(g, u, Nt::AttachSp, budget),
                    SetRule::Extend => go(g, u, Nt::Extend, budget),
                    SetRule::Dp => go(g, u, Nt::Dp, budget),
                    SetRule::Var => go(g, u, Nt::Var, budget),
                    SetRule::Single if budget >= 2 => {
                        parts().map(|(_, p)| (Expr::new(Op::Single, vec![p]), 1.0 / kf)).collect()
                    }
                    SetRule::Single => vec![],
                    SetRule::Union => {
                        let inner = go(g, u, Nt::Set, budget - 1);
                        let mut v = vec![];
                        for (a, pa) in &inner {
                            for (b, pb) in &inner {
                                v.push((Expr::union(a.clone(), b.clone()), pa * pb));
                            }
                        }
                        v
                    }
                };
                out.extend(sub.into_iter().map(|(e, p)| (e, p * w)));
            }
        }
        Nt::AttachSp if budget >= 2 => {
            for (a, pa) in parts() {
                for (b, pb) in parts() {
                    out.push((Expr::attach(pa.clone(), pb.clone()), t.p_ai / (kf * kf)));
                    let n = u.n_configs(a, b).max(1);
                    for c in 1..=n {
                        out.push((Expr::attach_at(pa.clone(), pb.clone(), c), (1.0 - t.p_ai) / (kf * kf) / n as f64));
                    }
                }
            }
        }
        Nt::Extend => {
            for (sp, p) in go(g, u, Nt::AttachSp, budget - 1) {
                let Op::Part(last) = sp.kids[1].op else { unreachable!() };
                let b = u.local(last).unwrap();
                for (d, pd) in parts() {
                    out.push((Expr::attach(sp.clone(), pd.clone()), p * 0.5 / kf));
                    let n = u.n_configs(b, d).max(1);
                    for c in 1..=n {
                        out.push((Expr::attach_at(sp.clone(), pd.clone(), c), p * 0.5 / kf / n as f64));
                    }
                }
            }
        }
        Nt::Dp if budget >= 2 => {
            for (_, p) in parts() {
                out.push((Expr::new(Op::Has, vec![p]), 0.5 / kf));
            }
            let sets = part_sets(u);
            let m = sets.len() as f64;
            for s in sets {
                out.push((Expr::one_of(s), 0.5 / m));
            }
        }
        Nt::Var => {
            let sets = part_sets(u);
            let m = sets.len() as f64;
            for (body, p) in go(g, u, Nt::VBody, budget - 1) {
                for s in &sets {
                    out.push((Expr::map(body.clone(), s.clone()), p / m));
                }
            }
        }
        Nt::VBody if budget >= 2 => {
            out.push((Expr::attach(Expr::var(), Expr::var()), 1.0 / 3.0));
            let n = u.kmax().max(1);
            for c in 1..=n {
                out.push((Expr::attach_at(Expr::var(), Expr::var(), c), 1.0 / 3.0 / n as f64));
            }
            for (sp, p) in go(g, u, Nt::AttachSp, budget - 1) {
                out.push((Expr::attach(sp, Expr::var()), p / 3.0));
            }
        }
        _ => {}
    }
    out
}
