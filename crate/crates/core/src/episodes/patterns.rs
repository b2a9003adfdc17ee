//! Partial-pattern templates and the bias-templated episode source.
//!
//! A template is three figures covering all but one of four options, either
//! four orientations of one figure or four primitives in one arrangement.

use super::{Episode, EpisodeError, QueryKind, Source, QUERY_SIZE};
use crate::token::Universe;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

pub const P_COMPLETION: f64 = 0.59;
pub const P_RECONFIGURE: f64 = 0.14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PatternKind {
    #[serde(rename = "rotations-1")]
    Rotations1,
    #[serde(rename = "rotations-2")]
    Rotations2,
    #[serde(rename = "primitives-1")]
    Primitives1,
    #[serde(rename = "primitives-2")]
    Primitives2,
}

impl PatternKind {
    pub fn name(self) -> &'static str {
        match self {
            PatternKind::Rotations1 => "rotations-1",
            PatternKind::Rotations2 => "rotations-2",
            PatternKind::Primitives1 => "primitives-1",
            PatternKind::Primitives2 => "primitives-2",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Template {
    pub kind: PatternKind,
    pub universe: Arc<Universe>,
    pub support: [u32; 3],
    pub completion: u32,
}

impl Template {
    fn rotated(&self, r: u8) -> ([u32; 3], u32) {
        let u = &self.universe;
        (self.support.map(|t| u.rotate(t, r)), u.rotate(self.completion, r))
    }
}

fn four_turns(u: &Universe, t: u32) -> bool {
    (1..4).all(|k| u.rotate(t, k) != t) && u.rotate(t, 1) != u.rotate(t, 3)
}

/// Every partial-pattern template over the given four-primitive universes.
#[derive(Debug, Clone, Default)]
pub struct PatternBank {
    pub templates: Vec<Template>,
}

impl PatternBank {
    pub fn from_universes(us: &[Arc<Universe>]) -> PatternBank {
        let mut templates = vec![];
        for u in us {
            if u.prims().len() != 4 {
                continue;
            }
            let mut push = |kind, support: [u32; 3], completion| {
                templates.push(Template { kind, universe: u.clone(), support, completion });
            };
            for a in 0..4u8 {
                let t = u.single(a);
                if four_turns(u, t) {
                    push(PatternKind::Rotations1, [t, u.rotate(t, 1), u.rotate(t, 2)], u.rotate(t, 3));
                }
            }
            let mut seen = std::collections::HashSet::new();
            for b2 in 0..u.builds2_of(3, 3).end {
                let t = u.token2(b2);
                if seen.insert(t) && four_turns(u, t) {
                    push(PatternKind::Rotations2, [t, u.rotate(t, 1), u.rotate(t, 2)], u.rotate(t, 3));
                }
            }
            for d in 0..4u8 {
                let s: Vec<u32> = (0..4u8).filter(|&x| x != d).map(|x| u.single(x)).collect();
                push(PatternKind::Primitives1, [s[0], s[1], s[2]], u.single(d));
            }
            for a in 0..4u8 {
                let n = (0..4u8).map(|x| u.n_configs(a, x)).min().unwrap_or(0);
                for c in 1..=n {
                    let Some(all) = (0..4u8).map(|x| u.build2(a, x, c).map(|b| u.token2(b))).collect::<Option<Vec<u32>>>()
                    else {
                        continue;
                    };
                    let mut uniq = all.clone();
                    uniq.sort_unstable();
                    uniq.dedup();
                    if uniq.len() < 4 {
                        continue;
                    }
                    for d in 0..4usize {
                        let s: Vec<u32> = (0..4).filter(|&x| x != d).map(|x| all[x]).collect();
                        push(PatternKind::Primitives2, [s[0], s[1], s[2]], all[d]);
                    }
                }
            }
        }
        PatternBank { templates }
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }
}

fn multiset(u: &Universe, t: u32) -> [u8; 8] {
    let mut m = [0u8; 8];
    for p in u.cells(t).prims() {
        m[u.local(p).expect("token over the universe bank") as usize] += 1;
    }
    m
}

/// Tokens that reuse the support's primitives in a new arrangement: the part
/// multiset contains that of some support figure, no other primitive
/// appears, and the figure is not a rotation of a support figure.
pub fn reconfigure_items(u: &Universe, support: &[u32]) -> Vec<u32> {
    let mask = support.iter().fold(0u8, |m, &t| m | u.rec(t).prim_mask);
    let sets: Vec<[u8; 8]> = support.iter().map(|&t| multiset(u, t)).collect();
    let orbit: std::collections::HashSet<u32> = support.iter().flat_map(|&t| (0..4).map(move |k| u.rotate(t, k))).collect();
    u.within(mask)
        .iter()
        .copied()
        .filter(|t| !orbit.contains(t))
        .filter(|&t| {
            let m = multiset(u, t);
            sets.iter().any(|s| s.iter().zip(&m).all(|(a, b)| a <= b))
        })
        .collect()
}

const NOISE_TRIES: usize = 10_000;

fn noise<R: Rng + ?Sized>(u: &Universe, excluded: &[u32], rng: &mut R) -> Result<u32, EpisodeError> {
    for _ in 0..NOISE_TRIES {
        let t = u.sample_null(rng);
        if excluded.binary_search(&t).is_err() {
            return Ok(t);
        }
    }
    let rest: Vec<u32> = (0..u.len() as u32).filter(|t| excluded.binary_search(t).is_err()).collect();
    if rest.is_empty() {
        return Err(EpisodeError::TemplateUnavailable("no noise tokens left".into()));
    }
    Ok(rest[rng.gen_range(0..rest.len())])
}

/// One bias-templated episode. Each query is independently the completion
/// item with probability `p_a`, a reconfigure item with probability `p_b`,
/// and otherwise a null-distribution token that is neither.
pub fn gen_c<R: Rng + ?Sized>(bank: &PatternBank, rng: &mut R, p_a: f64, p_b: f64) -> Result<Episode, EpisodeError> {
    if bank.is_empty() {
        return Err(EpisodeError::TemplateUnavailable("empty pattern bank".into()));
    }
    if !(0.0..=1.0).contains(&p_a) || !(0.0..=1.0).contains(&p_b) || p_a + p_b > 1.0 {
        return Err(EpisodeError::TemplateUnavailable(format!("bad query probabilities {p_a}, {p_b}")));
    }
    for _ in 0..100 {
        let tpl = &bank.templates[rng.gen_range(0..bank.len())];
        let u = &tpl.universe;
        let (support, completion) = tpl.rotated(rng.gen_range(0..4));
        let reconf = reconfigure_items(u, &support);
        if reconf.is_empty() && p_b > 0.0 {
            continue;
        }
        let mut excluded = reconf.clone();
        excluded.push(completion);
        excluded.sort_unstable();
        let mut query = Vec::with_capacity(QUERY_SIZE);
        let mut kinds = Vec::with_capacity(QUERY_SIZE);
        for _ in 0..QUERY_SIZE {
            let x: f64 = rng.gen();
            let (t, k) = if x < p_a {
                (completion, QueryKind::Completion)
            } else if x < p_a + p_b {
                (reconf[rng.gen_range(0..reconf.len())], QueryKind::Reconfigure)
            } else {
                (noise(u, &excluded, rng)?, QueryKind::Noise)
            };
            query.push(u.string(t).to_string());
            kinds.push(k);
        }
        return Ok(Episode {
            source: Source::C,
            support: support.iter().map(|&t| u.string(t).to_string()).collect(),
            query,
            trial_ref: Some(tpl.kind.name().to_string()),
            query_kinds: kinds,
        });
    }
    Err(EpisodeError::TemplateUnavailable("no template with reconfigure items".into()))
}
