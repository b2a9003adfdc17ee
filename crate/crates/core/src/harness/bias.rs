//! Token sets that express the generation biases: keeping a figure but
//! turning it, keeping the parts but reattaching them, completing a partial
//! pattern, and recombining seen parts into something new.

use crate::episodes::{reconfigure_items, PatternBank};
use crate::token::Universe;
use std::collections::BTreeSet;
use std::sync::Arc;

pub const BIAS_KINDS: [&str; 4] = ["orientation-invariance", "attachment-invariance", "complete-the-pattern", "reconfigure"];

fn multiset(u: &Universe, t: u32) -> Vec<u8> {
    let mut v: Vec<u8> = u.cells(t).prims().map(|p| u.local(p).expect("token of this universe")).collect();
    v.sort_unstable();
    v
}

/// Sorted token ids for each entry of [`BIAS_KINDS`]; exemplars are never
/// members.
pub fn bias_sets(u: &Arc<Universe>, exemplars: &[u32]) -> [Vec<u32>; 4] {
    let exs: BTreeSet<u32> = exemplars.iter().copied().collect();
    let orbit: BTreeSet<u32> = exemplars.iter().flat_map(|&e| (0..4).map(move |k| u.rotate(e, k))).collect();
    let rotations: Vec<u32> = orbit.difference(&exs).copied().collect();

    let shapes: BTreeSet<Vec<u8>> = exemplars.iter().filter(|&&e| u.rec(e).n_parts >= 2).map(|&e| multiset(u, e)).collect();
    let mask = exemplars.iter().fold(0u8, |m, &e| m | u.rec(e).prim_mask);
    let reattached: Vec<u32> = u
        .within(mask)
        .iter()
        .copied()
        .filter(|t| !orbit.contains(t) && u.rec(*t).n_parts >= 2 && shapes.contains(&multiset(u, *t)))
        .collect();

    let mut complete = BTreeSet::new();
    for tpl in PatternBank::from_universes(std::slice::from_ref(u)).templates {
        for r in 0..4 {
            let support = tpl.support.map(|t| u.rotate(t, r));
            let c = u.rotate(tpl.completion, r);
            if support.iter().all(|t| exs.contains(t)) && !exs.contains(&c) {
                complete.insert(c);
            }
        }
    }
    let reconf: Vec<u32> = reconfigure_items(u, exemplars).into_iter().filter(|t| !complete.contains(t)).collect();
    let mut out = [rotations, reattached, complete.into_iter().collect(), reconf];
    for s in &mut out {
        s.sort_unstable();
    }
    out
}
