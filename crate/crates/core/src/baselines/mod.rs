//! Exemplar-similarity baselines over token strings.
//!
//! Distances compare the three fields of two token strings separately: the
//! part list as a sequence of primitive symbols, the attachment field and the
//! orientation field as character strings.

use crate::fitting::{binomial_nll, minimize, OptimOptions};
use crate::token::{split_fields, split_prims, TokenError, Universe};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::io::Read;
use strsim::generic_levenshtein;

/// Classification scores are clamped into `[ε, 1 − ε]` inside the binomial
/// objective so that a top-scoring item with any "no" response stays finite.
pub const SCORE_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GcmWeights {
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
}

impl Default for GcmWeights {
    fn default() -> Self {
        GcmWeights { w1: 1.0, w2: 1.0, w3: 1.0 }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BaselineError {
    #[error(transparent)]
    Format(#[from] TokenError),
    #[error("negative weight {0}")]
    NegativeWeight(f64),
    #[error("feature file: {0}")]
    Features(String),
    #[error("no feature vector for {0}")]
    MissingFeatures(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// The three fields of a token string, with the part list tokenized.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fields<'a> {
    pub parts: Vec<&'a str>,
    pub attach: &'a str,
    pub orientation: &'a str,
}

pub fn fields(s: &str) -> Result<Fields<'_>, TokenError> {
    let (inner, attach, orientation) = split_fields(s)?;
    let parts = split_prims(inner)
        .ok_or_else(|| TokenError::Parse(s.to_string(), "parts must be primitive symbols".into()))?;
    Ok(Fields { parts, attach, orientation })
}

/// Per-field edit distances `[d1, d2, d3]`.
pub fn field_distances(y: &Fields, x: &Fields) -> [usize; 3] {
    [
        generic_levenshtein(&y.parts, &x.parts),
        generic_levenshtein(&y.attach.chars().collect::<Vec<_>>(), &x.attach.chars().collect::<Vec<_>>()),
        generic_levenshtein(&y.orientation.chars().collect::<Vec<_>>(), &x.orientation.chars().collect::<Vec<_>>()),
    ]
}

fn weighted(d: [usize; 3], w: &GcmWeights) -> f64 {
    w.w1 * d[0] as f64 + w.w2 * d[1] as f64 + w.w3 * d[2] as f64
}

pub fn gcm_distance(y: &str, x: &str, w: &GcmWeights) -> Result<f64, BaselineError> {
    Ok(weighted(field_distances(&fields(y)?, &fields(x)?), w))
}

/// Distance triples between every query and every exemplar, computed once so
/// weights can be varied cheaply.
#[derive(Debug, Clone)]
pub struct DistanceTable {
    /// `d[q][i]` for query `q` and exemplar `i`.
    pub d: Vec<Vec<[usize; 3]>>,
}

impl DistanceTable {
    pub fn new<S: AsRef<str>>(queries: &[S], exemplars: &[S]) -> Result<DistanceTable, BaselineError> {
        let ex: Vec<Fields> = exemplars.iter().map(|s| fields(s.as_ref())).collect::<Result<_, _>>()?;
        let d = queries
            .iter()
            .map(|q| {
                let fq = fields(q.as_ref())?;
                Ok(ex.iter().map(|fx| field_distances(&fq, fx)).collect())
            })
            .collect::<Result<_, TokenError>>()?;
        Ok(DistanceTable { d })
    }

    /// Summed similarity `Σ_i exp(−dist(y, x_i))` per query.
    pub fn similarity(&self, w: &GcmWeights) -> Vec<f64> {
        self.d.iter().map(|row| row.iter().map(|&d| (-weighted(d, w)).exp()).sum()).collect()
    }
}

fn check(w: &GcmWeights) -> Result<(), BaselineError> {
    for v in [w.w1, w.w2, w.w3] {
        if v < 0.0 || v.is_nan() {
            return Err(BaselineError::NegativeWeight(v));
        }
    }
    Ok(())
}

/// Classification scores for a trial's full test set, normalized by the
/// largest summed similarity among the test items.
pub fn gcm_classify<S: AsRef<str>>(items: &[S], exemplars: &[S], w: &GcmWeights) -> Result<Vec<f64>, BaselineError> {
    check(w)?;
    Ok(normalize_max(DistanceTable::new(items, exemplars)?.similarity(w)))
}

fn normalize_max(s: Vec<f64>) -> Vec<f64> {
    let m = s.iter().copied().fold(0.0, f64::max);
    s.into_iter().map(|v| if m > 0.0 { v / m } else { 1.0 }).collect()
}

/// Generation probabilities over the universe, in universe order.
pub fn gcm_generative<S: AsRef<str>>(exemplars: &[S], w: &GcmWeights, u: &Universe) -> Result<Vec<f64>, BaselineError> {
    check(w)?;
    let strings: Vec<&str> = (0..u.len() as u32).map(|i| u.string(i)).collect();
    let ex: Vec<&str> = exemplars.iter().map(|s| s.as_ref()).collect();
    let sim = DistanceTable::new(&strings, &ex)?.similarity(w);
    let z: f64 = sim.iter().sum();
    Ok(sim.into_iter().map(|s| s / z).collect())
}

/// A trial prepared for fitting classification weights.
#[derive(Debug, Clone)]
pub struct GcmClsTrial {
    pub trial_id: String,
    pub table: DistanceTable,
    /// `(query index, k, n)`.
    pub obs: Vec<(usize, u32, u32)>,
}

/// A trial prepared for fitting generation weights: distances from every
/// universe token to the exemplars.
#[derive(Debug, Clone)]
pub struct GcmGenTrial {
    pub trial_id: String,
    pub table: DistanceTable,
    pub tokens: Vec<u32>,
}

pub fn gcm_nll_classification(data: &[GcmClsTrial], w: &GcmWeights) -> f64 {
    data.iter()
        .map(|t| {
            let s = normalize_max(t.table.similarity(w));
            t.obs.iter().map(|&(q, k, n)| binomial_nll(s[q].clamp(SCORE_EPS, 1.0 - SCORE_EPS), k, n)).sum::<f64>()
        })
        .sum()
}

pub fn gcm_nll_generation(data: &[GcmGenTrial], w: &GcmWeights) -> f64 {
    data.iter()
        .map(|t| {
            let s = t.table.similarity(w);
            let lz = s.iter().sum::<f64>().ln();
            t.tokens.iter().map(|&y| lz - s[y as usize].ln()).sum::<f64>()
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GcmFit {
    pub weights: GcmWeights,
    pub nll: f64,
    pub converged: bool,
}

/// Fit weights in log coordinates with a few deterministic starts.
pub fn fit_gcm(nll: impl Fn(&GcmWeights) -> f64 + Sync) -> GcmFit {
    let decode = |u: &[f64]| GcmWeights { w1: u[0].exp(), w2: u[1].exp(), w3: u[2].exp() };
    let mut best: Option<GcmFit> = None;
    for start in [[0.0, 0.0, 0.0], [-2.0, -2.0, -2.0], [1.5, 0.0, -1.5], [-1.5, 0.0, 1.5]] {
        let r = minimize(|u: &[f64]| nll(&decode(u)), &start, &OptimOptions::default());
        if best.as_ref().is_none_or(|b| r.f < b.nll) {
            best = Some(GcmFit { weights: decode(&r.x), nll: r.f, converged: r.converged });
        }
    }
    best.expect("at least one start")
}

/// Externally supplied feature vectors keyed by token string, for a
/// similarity model over arbitrary (e.g. pixel-derived) features.
#[derive(Debug, Clone, Default)]
pub struct FeatureTable {
    pub dim: usize,
    pub vectors: HashMap<String, Vec<f64>>,
}

impl FeatureTable {
    /// CSV rows `token_string, f1, ..., fd`, with a header line.
    pub fn read_csv<R: Read>(r: R) -> Result<FeatureTable, BaselineError> {
        let mut rdr = csv::Reader::from_reader(r);
        let mut t = FeatureTable::default();
        for (n, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let key = rec.get(0).ok_or_else(|| BaselineError::Features(format!("row {} is empty", n + 1)))?;
            let v: Vec<f64> = rec
                .iter()
                .skip(1)
                .map(|s| s.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| BaselineError::Features(format!("row {}: {e}", n + 1)))?;
            if t.vectors.is_empty() {
                t.dim = v.len();
            } else if v.len() != t.dim {
                return Err(BaselineError::Features(format!("row {} has {} features, expected {}", n + 1, v.len(), t.dim)));
            }
            t.vectors.insert(key.to_string(), v);
        }
        Ok(t)
    }

    fn get(&self, s: &str) -> Result<&[f64], BaselineError> {
        self.vectors.get(s).map(|v| &v[..]).ok_or_else(|| BaselineError::MissingFeatures(s.to_string()))
    }

    /// Max-normalized summed similarity `Σ_i exp(−c·‖f(y) − f(x_i)‖)`.
    pub fn classify<S: AsRef<str>>(&self, items: &[S], exemplars: &[S], c: f64) -> Result<Vec<f64>, BaselineError> {
        let ex: Vec<&[f64]> = exemplars.iter().map(|s| self.get(s.as_ref())).collect::<Result<_, _>>()?;
        let sims = items
            .iter()
            .map(|y| {
                let fy = self.get(y.as_ref())?;
                Ok(ex
                    .iter()
                    .map(|fx| {
                        let d = fy.iter().zip(fx.iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                        (-c * d).exp()
                    })
                    .sum())
            })
            .collect::<Result<Vec<f64>, BaselineError>>()?;
        Ok(normalize_max(sims))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{default_bank, AttachmentTable, PrimId};
    use proptest::prelude::*;

    #[test]
    fn orientation_only_difference() {
        let w = GcmWeights { w1: 0.0, w2: 0.0, w3: 1.5 };
        // "180" -> "0" deletes two characters
        assert_eq!(gcm_distance("(p1p2)+1+180", "(p1p2)+1+0", &w).unwrap(), 3.0);
        assert_eq!(gcm_distance("(p1p2)+1+180", "(p1p2)+1+180", &GcmWeights::default()).unwrap(), 0.0);
        assert!(gcm_distance("p1p2+1+0", "(p1)++0", &w).is_err());
    }

    #[test]
    fn parts_compare_by_symbol() {
        let w = GcmWeights { w1: 1.0, w2: 0.0, w3: 0.0 };
        assert_eq!(gcm_distance("(p1p12)+1+0", "(p1p2)+1+0", &w).unwrap(), 1.0);
        assert_eq!(gcm_distance("(p3)++0", "(p1p2p3)+1:1.1:1+0", &w).unwrap(), 2.0);
    }

    #[test]
    fn classify_is_max_normalized() {
        let ex = ["(p1p2)+1+0", "(p1p2)+1+90"];
        let items = ["(p1p2)+1+0", "(p1p2)+2+0", "(p3)++0"];
        let s = gcm_classify(&items, &ex[..2].iter().copied().chain([items[0]]).collect::<Vec<_>>()[..2], &GcmWeights::default()).unwrap();
        assert_eq!(s[0], 1.0);
        assert!(s.iter().all(|&v| (0.0..=1.0).contains(&v)));
        let flat = gcm_classify(&items, &ex, &GcmWeights { w1: 0.0, w2: 0.0, w3: 0.0 }).unwrap();
        assert!(flat.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn generative_normalizes_and_prefers_exemplars() {
        let bank = default_bank();
        let table = AttachmentTable::build(&bank);
        let u = Universe::build(&bank, &table, &[PrimId(0), PrimId(2), PrimId(3)]).unwrap();
        let ex = [u.string(20).to_string(), u.string(45).to_string()];
        let p = gcm_generative(&ex, &GcmWeights { w1: 6.0, w2: 6.0, w3: 6.0 }, &u).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let top = p.iter().copied().fold(0.0, f64::max);
        assert_eq!(p[20], top);
        let flat = gcm_generative(&ex, &GcmWeights { w1: 0.0, w2: 0.0, w3: 0.0 }, &u).unwrap();
        assert!(flat.iter().all(|&v| (v - 1.0 / u.len() as f64).abs() < 1e-12));
    }

    #[test]
    fn feature_import_and_similarity() {
        let csv = "token_string,f1,f2\n(p1)++0,0,0\n(p1)++90,3,4\n(p3)++0,0,1\n";
        let t = FeatureTable::read_csv(csv.as_bytes()).unwrap();
        assert_eq!(t.dim, 2);
        let s = t.classify(&["(p1)++0", "(p1)++90", "(p3)++0"], &["(p1)++0"], 1.0).unwrap();
        assert_eq!(s[0], 1.0);
        assert!((s[1] - (-5.0f64).exp()).abs() < 1e-12);
        assert!(FeatureTable::read_csv("t,f1\n(p1)++0,1\n(p3)++0,1,2\n".as_bytes()).is_err());
    }

    fn arb_field() -> impl Strategy<Value = Vec<u8>> {
        prop::collection::vec(0u8..4, 0..6)
    }

    proptest! {
        #[test]
        fn edit_distance_is_a_metric(a in arb_field(), b in arb_field(), c in arb_field()) {
            let d = |x: &Vec<u8>, y: &Vec<u8>| generic_levenshtein(x, y);
            prop_assert_eq!(d(&a, &b), d(&b, &a));
            prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c));
            prop_assert_eq!(d(&a, &a), 0);
        }
    }
}
