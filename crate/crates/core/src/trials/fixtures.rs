//! Built-in trial types.
//!
//! Each type is a recipe over four abstract primitive roles `A..D`. A concrete
//! trial binds the roles to four primitives drawn from the global bank; a
//! binding is kept only if every figure the recipe asks for exists. Test
//! items are then drawn per novelty type from the trial universe.

use super::{TestItem, Trial};
use crate::geometry::{AttachmentTable, PrimId, PrimitiveBank};
use crate::token::Universe;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeMap, BTreeSet};

pub const ASSIGNMENTS: usize = 5;

/// Exemplars of one trial plus items that only the recipe can name.
struct Built {
    exemplars: Vec<u32>,
    extra: Vec<(&'static str, u32)>,
    /// Local index of a defining part, for the A / No A item types.
    defining: Option<u8>,
}

type Recipe = fn(&Universe, [u8; 4]) -> Option<Built>;

#[derive(Clone, Copy)]
pub struct TrialType {
    pub name: &'static str,
    /// Exemplars shown; a 1b type yields a 3- and a 6-exemplar variant.
    pub conditions: &'static [usize],
    recipe: Recipe,
}

fn one(u: &Universe, a: u8, rot: u8) -> Option<u32> {
    Some(u.rotate(u.single(a), rot))
}

fn two(u: &Universe, a: u8, b: u8, cfg: u16, rot: u8) -> Option<u32> {
    Some(u.rotate(u.token2(u.build2(a, b, cfg)?), rot))
}

fn three(u: &Universe, (a, b, cfg): (u8, u8, u16), d: u8, j: u8, cfg3: u16, rot: u8) -> Option<u32> {
    Some(u.rotate(u.extension(u.build2(a, b, cfg)?, d, j, cfg3)?, rot))
}

fn asymmetric(u: &Universe, a: u8) -> bool {
    u.rotate(u.single(a), 1) != u.single(a) && u.rotate(u.single(a), 2) != u.single(a)
}

fn distinct(xs: Vec<Option<u32>>) -> Option<Vec<u32>> {
    let xs: Vec<u32> = xs.into_iter().collect::<Option<_>>()?;
    let set: BTreeSet<u32> = xs.iter().copied().collect();
    (set.len() == xs.len()).then_some(xs)
}

fn plain(xs: Vec<Option<u32>>) -> Option<Built> {
    Some(Built { exemplars: distinct(xs)?, extra: vec![], defining: None })
}

// -- 1a: one to three exemplars

fn single_part(u: &Universe, [a, ..]: [u8; 4]) -> Option<Built> {
    asymmetric(u, a).then(|| plain(vec![one(u, a, 0)]))?
}

fn single_part_two_angles(u: &Universe, [a, ..]: [u8; 4]) -> Option<Built> {
    asymmetric(u, a).then(|| plain(vec![one(u, a, 0), one(u, a, 1)]))?
}

fn pair_once(u: &Universe, [a, b, ..]: [u8; 4]) -> Option<Built> {
    plain(vec![two(u, a, b, 1, 0)])
}

fn pair_rotated(u: &Universe, [a, b, ..]: [u8; 4]) -> Option<Built> {
    plain(vec![two(u, a, b, 1, 0), two(u, a, b, 1, 1), two(u, a, b, 1, 2)])
}

fn pair_reattached(u: &Universe, [a, b, ..]: [u8; 4]) -> Option<Built> {
    plain(vec![two(u, a, b, 1, 0), two(u, a, b, 2, 0), two(u, a, b, 3, 0)])
}

fn two_singles(u: &Universe, [a, b, ..]: [u8; 4]) -> Option<Built> {
    plain(vec![one(u, a, 0), one(u, b, 0)])
}

fn shared_part(u: &Universe, [a, b, c, d]: [u8; 4]) -> Option<Built> {
    let mut x = plain(vec![two(u, a, b, 1, 0), two(u, a, c, 1, 1), two(u, a, d, 1, 0)])?;
    x.defining = Some(a);
    Some(x)
}

fn doubled(u: &Universe, [a, b, ..]: [u8; 4]) -> Option<Built> {
    plain(vec![two(u, a, a, 1, 0), two(u, b, b, 1, 0)])
}

fn triple_rotated(u: &Universe, [a, b, c, _]: [u8; 4]) -> Option<Built> {
    plain(vec![three(u, (a, b, 1), c, 1, 1, 0), three(u, (a, b, 1), c, 1, 1, 1)])
}

fn pair_swap_partner(u: &Universe, [a, b, c, _]: [u8; 4]) -> Option<Built> {
    plain(vec![two(u, a, b, 1, 0), two(u, a, c, 1, 0)])
}

fn part_and_pair(u: &Universe, [a, b, ..]: [u8; 4]) -> Option<Built> {
    plain(vec![one(u, a, 0), two(u, a, b, 1, 0)])
}

// -- 1b: six exemplars, the first three form the short condition

fn triple_configs(u: &Universe, [a, b, c, _]: [u8; 4]) -> Option<Built> {
    let t = |cfg3, rot| three(u, (a, b, 1), c, 1, cfg3, rot);
    plain(vec![t(1, 0), t(1, 1), t(1, 2), t(2, 0), t(2, 3), t(1, 3)])
}

fn defining_part(u: &Universe, [a, b, c, d]: [u8; 4]) -> Option<Built> {
    let mut x = plain(vec![
        two(u, a, b, 1, 0),
        three(u, (c, a, 1), d, 1, 1, 1),
        two(u, a, c, 2, 2),
        three(u, (a, d, 1), b, 1, 1, 0),
        three(u, (b, a, 1), c, 0, 1, 3),
        three(u, (c, a, 1), b, 0, 1, 1),
    ])?;
    x.defining = Some(a);
    Some(x)
}

fn subpart_and_variable(u: &Universe, [a, b, c, d]: [u8; 4]) -> Option<Built> {
    let t = |x, rot| three(u, (a, b, 1), x, 1, 1, rot);
    let mut built = plain(vec![t(c, 0), t(d, 1), t(a, 2), t(b, 3), t(c, 2), t(d, 0)])?;
    built.extra.push(("subpart", two(u, a, b, 1, 0)?));
    built.extra.push(("subpart", two(u, a, b, 1, 1)?));
    built.extra.push(("broader", three(u, (a, b, 2), c, 1, 1, 0)?));
    Some(built)
}

fn doubled_all(u: &Universe, [a, b, c, d]: [u8; 4]) -> Option<Built> {
    plain(vec![two(u, a, a, 1, 0), two(u, b, b, 1, 1), two(u, c, c, 1, 0), two(u, d, d, 1, 2), two(u, a, a, 2, 1), two(u, b, b, 2, 0)])
}

fn primitives_one(u: &Universe, [a, b, c, _]: [u8; 4]) -> Option<Built> {
    plain(vec![one(u, a, 0), one(u, b, 0), one(u, c, 0), one(u, a, 1), one(u, b, 1), one(u, c, 1)])
}

fn rotations_one(u: &Universe, [a, b, ..]: [u8; 4]) -> Option<Built> {
    if !asymmetric(u, a) || !asymmetric(u, b) {
        return None;
    }
    plain(vec![one(u, a, 0), one(u, a, 1), one(u, a, 2), one(u, b, 0), one(u, b, 1), one(u, b, 2)])
}

fn rotations_two(u: &Universe, [a, b, ..]: [u8; 4]) -> Option<Built> {
    plain(vec![two(u, a, b, 1, 0), two(u, a, b, 1, 1), two(u, a, b, 1, 2), two(u, a, b, 2, 0), two(u, a, b, 2, 1), two(u, a, b, 2, 2)])
}

fn primitives_two(u: &Universe, [a, b, c, _]: [u8; 4]) -> Option<Built> {
    plain(vec![two(u, a, a, 1, 0), two(u, a, b, 1, 0), two(u, a, c, 1, 0), two(u, a, a, 1, 1), two(u, a, b, 1, 1), two(u, a, c, 1, 1)])
}

fn any_attachment(u: &Universe, [a, b, ..]: [u8; 4]) -> Option<Built> {
    plain((1..=6).map(|c| two(u, a, b, c, (c % 4) as u8)).collect())
}

fn two_figures(u: &Universe, [a, b, c, d]: [u8; 4]) -> Option<Built> {
    plain(vec![two(u, a, b, 1, 0), two(u, c, d, 1, 0), two(u, a, b, 1, 1), two(u, c, d, 1, 1), two(u, a, b, 1, 2), two(u, c, d, 1, 2)])
}

const ONE_A: &[usize] = &[0];
const ONE_B: &[usize] = &[3, 6];

pub const TRIAL_TYPES: [TrialType; 21] = [
    TrialType { name: "1a-single-part", conditions: ONE_A, recipe: single_part },
    TrialType { name: "1a-single-part-two-angles", conditions: ONE_A, recipe: single_part_two_angles },
    TrialType { name: "1a-pair-once", conditions: ONE_A, recipe: pair_once },
    TrialType { name: "1a-pair-rotated", conditions: ONE_A, recipe: pair_rotated },
    TrialType { name: "1a-pair-reattached", conditions: ONE_A, recipe: pair_reattached },
    TrialType { name: "1a-two-singles", conditions: ONE_A, recipe: two_singles },
    TrialType { name: "1a-shared-part", conditions: ONE_A, recipe: shared_part },
    TrialType { name: "1a-doubled", conditions: ONE_A, recipe: doubled },
    TrialType { name: "1a-triple-rotated", conditions: ONE_A, recipe: triple_rotated },
    TrialType { name: "1a-swap-partner", conditions: ONE_A, recipe: pair_swap_partner },
    TrialType { name: "1a-part-and-pair", conditions: ONE_A, recipe: part_and_pair },
    TrialType { name: "1b-triple-configs", conditions: ONE_B, recipe: triple_configs },
    TrialType { name: "1b-defining-part", conditions: ONE_B, recipe: defining_part },
    TrialType { name: "1b-subpart-variable", conditions: ONE_B, recipe: subpart_and_variable },
    TrialType { name: "1b-doubled-all", conditions: ONE_B, recipe: doubled_all },
    TrialType { name: "1b-primitives-1", conditions: ONE_B, recipe: primitives_one },
    TrialType { name: "1b-rotations-1", conditions: ONE_B, recipe: rotations_one },
    TrialType { name: "1b-rotations-2", conditions: ONE_B, recipe: rotations_two },
    TrialType { name: "1b-primitives-2", conditions: ONE_B, recipe: primitives_two },
    TrialType { name: "1b-any-attachment", conditions: ONE_B, recipe: any_attachment },
    TrialType { name: "1b-two-figures", conditions: ONE_B, recipe: two_figures },
];

/// Number of (type, condition) combinations: 11 + 10 × 2.
pub fn n_trial_types() -> usize {
    TRIAL_TYPES.iter().map(|t| t.conditions.len()).sum()
}

fn multiset(u: &Universe, t: u32) -> Vec<u8> {
    let mut v: Vec<u8> = u.cells(t).prims().map(|p| u.local(p).expect("token of this universe")).collect();
    v.sort_unstable();
    v
}

/// Candidate test items per novelty type.
fn novelty_pools(u: &Universe, ex: &[u32], defining: Option<u8>) -> BTreeMap<&'static str, Vec<u32>> {
    let exs: BTreeSet<u32> = ex.iter().copied().collect();
    let orbit: BTreeSet<u32> = ex.iter().flat_map(|&e| (0..4).map(move |k| u.rotate(e, k))).collect();
    let sets: BTreeSet<Vec<u8>> = ex.iter().map(|&e| multiset(u, e)).collect();
    let mask = ex.iter().fold(0u8, |m, &e| m | u.rec(e).prim_mask);
    let nmin = ex.iter().map(|&e| u.rec(e).n_parts).min().unwrap_or(1);
    let nmax = ex.iter().map(|&e| u.rec(e).n_parts).max().unwrap_or(1);
    let mut pools: BTreeMap<&'static str, Vec<u32>> = BTreeMap::new();
    pools.insert("identity", ex.to_vec());
    pools.insert("novel rotation", orbit.difference(&exs).copied().collect());
    for t in 0..u.len() as u32 {
        let r = u.rec(t);
        let inside = r.prim_mask & !mask == 0;
        let ty = if orbit.contains(&t) {
            None
        } else if r.n_parts >= 2 && sets.contains(&multiset(u, t)) {
            Some("novel attachment")
        } else if let Some(a) = defining {
            let has_a = r.prim_mask >> a & 1 == 1;
            match (r.n_parts, has_a) {
                (2, true) => Some("A 2-part"),
                (2, false) => Some("No A 2-part"),
                (3, true) => Some("A 3-part"),
                (3, false) => Some("No A 3-part"),
                _ if !inside => Some("other primitive"),
                _ => Some("part"),
            }
        } else if r.n_parts > nmax && inside {
            Some("more parts")
        } else if r.n_parts == 1 && !inside {
            Some("other primitive")
        } else if r.n_parts == 1 && inside && nmin >= 2 {
            Some("part")
        } else if r.n_parts > 1 && r.n_parts < nmin && inside {
            Some("fewer")
        } else if r.n_parts >= 2 && !inside {
            Some("other")
        } else {
            None
        };
        if let Some(ty) = ty {
            pools.entry(ty).or_default().push(t);
        }
    }
    pools
}

fn pick_items<R: Rng>(u: &Universe, built: &Built, shown: &[u32], rng: &mut R) -> Vec<TestItem> {
    let pools = novelty_pools(u, shown, built.defining);
    let mut items: Vec<(String, u32)> = vec![];
    let mut taken = BTreeSet::new();
    for (ty, pool) in &pools {
        let n = match *ty {
            "A 2-part" | "No A 2-part" | "A 3-part" | "No A 3-part" => 3,
            "identity" | "novel rotation" | "novel attachment" | "more parts" => 2,
            _ => 1,
        };
        for &t in pool.choose_multiple(rng, n) {
            if taken.insert(t) {
                items.push((ty.to_string(), t));
            }
        }
    }
    for &(ty, t) in &built.extra {
        if taken.insert(t) {
            items.push((ty.to_string(), t));
        }
    }
    items.into_iter().map(|(novelty_type, t)| TestItem { string: u.string(t).to_string(), novelty_type }).collect()
}

/// Bind the roles of `ty` to primitives and build one trial per condition.
fn make_trials(
    ty: &TrialType,
    assignment: usize,
    bank: &PrimitiveBank,
    table: &AttachmentTable,
    rng: &mut ChaCha8Rng,
) -> Vec<Trial> {
    let ids: Vec<PrimId> = bank.ids().collect();
    for _ in 0..10_000 {
        let roles: Vec<PrimId> = ids.choose_multiple(rng, 4).copied().collect();
        let u = Universe::build(bank, table, &roles).expect("4-primitive universes fit the cap");
        let local: Vec<u8> = roles.iter().map(|&p| u.local(p).unwrap()).collect();
        let Some(built) = (ty.recipe)(&u, [local[0], local[1], local[2], local[3]]) else {
            continue;
        };
        return ty
            .conditions
            .iter()
            .map(|&n| {
                let shown = if n == 0 { &built.exemplars[..] } else { &built.exemplars[..n] };
                let cond = if n == 0 { String::new() } else { format!("-x{n}") };
                Trial {
                    trial_id: format!("{}{}-{}", ty.name, cond, assignment + 1),
                    bank: roles.iter().map(|&p| bank.name(p).to_string()).collect(),
                    exemplars: shown.iter().map(|&t| u.string(t).to_string()).collect(),
                    test_items: pick_items(&u, &built, shown, &mut rng.clone()),
                }
            })
            .collect();
    }
    panic!("no primitive assignment satisfies trial type {}", ty.name)
}

/// Every trial type × condition × assignment.
pub fn standard_trials(bank: &PrimitiveBank, table: &AttachmentTable, seed: u64) -> Vec<Trial> {
    standard_trials_upto(bank, table, seed, usize::MAX)
}

/// The first `n` trials of [`standard_trials`], without building the rest.
pub fn standard_trials_upto(bank: &PrimitiveBank, table: &AttachmentTable, seed: u64, n: usize) -> Vec<Trial> {
    let mut out = vec![];
    for (i, ty) in TRIAL_TYPES.iter().enumerate() {
        for a in 0..ASSIGNMENTS {
            if out.len() >= n {
                out.truncate(n);
                return out;
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream((i * 16 + a) as u64);
            out.extend(make_trials(ty, a, bank, table, &mut rng));
        }
    }
    out.truncate(n);
    out
}

/// The defining-part trial with its A / No A test items, for one assignment.
pub fn defining_part_trial(bank: &PrimitiveBank, table: &AttachmentTable, seed: u64) -> Trial {
    let ty = TRIAL_TYPES.iter().find(|t| t.name == "1b-defining-part").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    make_trials(ty, 0, bank, table, &mut rng).pop().expect("six-exemplar condition")
}
