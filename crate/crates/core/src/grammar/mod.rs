//! The concept grammar: a probabilistic context-free grammar over programs.
//!
//! ```text
//! START     -> (rotate SET)                  p_RI
//!            | (rotate* SET ANGLE)           1 - p_RI
//! SET       -> ATTACH_SP | EXTEND | DP | VAR | (single PART) | (union SET SET)
//! ATTACH_SP -> (attach PART PART)            p_AI
//!            | (attach* PART PART CONFIG)    1 - p_AI
//! EXTEND    -> (attach ATTACH_SP PART) | (attach* ATTACH_SP PART CONFIG)
//! DP        -> (has PART) | (oneof PARTSET)
//! VAR       -> (map (lambda x VBODY) PARTSET)
//! VBODY     -> (attach x x) | (attach* x x CONFIG) | (attach ATTACH_SP x)
//! PART      -> any primitive of the trial bank
//! PARTSET   -> S | (set p ...)               any nonempty subset
//! CONFIG    -> 1 .. n                        n configurations of the operand pair
//! ANGLE     -> 0 | 90 | 180 | 270
//! ```
//!
//! The eight free probabilities are `p_RI`, `p_AI` and the six `SET`
//! branches; every other nonterminal is uniform. `attach*` in `EXTEND`
//! anchors on the last part of its inner pair, and a `CONFIG` whose operands
//! are not both literals ranges over the largest configuration count in the
//! bank.

mod enumerate;
mod expr;
mod prior;
mod sample;

pub use enumerate::enumerate_programs;
pub use expr::{parse_program, Expr, Op, PartSet, Program};
pub use prior::{log_gen, sites, RuleCounts, Site, N_RULES};
pub use sample::{sample_from, sample_program, SampleStats};

use serde::{Deserialize, Serialize};
use serde_json::json;

pub const DEFAULT_MAX_DEPTH: usize = 12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GrammarError {
    #[error("program is not derivable: {0}")]
    NotDerivable(String),
    #[error("every rule of {0} is lesioned")]
    AllRulesLesioned(String),
    #[error("derivation exceeded depth {0}")]
    DepthExceeded(usize),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid parameters: {0}")]
    InvalidTheta(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Nt {
    Start,
    Set,
    AttachSp,
    Extend,
    Dp,
    Var,
    VBody,
    Part,
    PartSet,
    Config,
    Angle,
}

impl Nt {
    pub const ALL: [Nt; 11] = [
        Nt::Start,
        Nt::Set,
        Nt::AttachSp,
        Nt::Extend,
        Nt::Dp,
        Nt::Var,
        Nt::VBody,
        Nt::Part,
        Nt::PartSet,
        Nt::Config,
        Nt::Angle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Nt::Start => "START",
            Nt::Set => "SET",
            Nt::AttachSp => "ATTACH_SP",
            Nt::Extend => "EXTEND",
            Nt::Dp => "DP",
            Nt::Var => "VAR",
            Nt::VBody => "VBODY",
            Nt::Part => "PART",
            Nt::PartSet => "PARTSET",
            Nt::Config => "CONFIG",
            Nt::Angle => "ANGLE",
        }
    }
}

/// Branches of `SET`, in parameter order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SetRule {
    AttachSp = 0,
    Extend = 1,
    Dp = 2,
    Var = 3,
    Single = 4,
    Union = 5,
}

impl SetRule {
    pub const ALL: [SetRule; 6] =
        [SetRule::AttachSp, SetRule::Extend, SetRule::Dp, SetRule::Var, SetRule::Single, SetRule::Union];

    pub fn name(self) -> &'static str {
        match self {
            SetRule::AttachSp => "ATTACH_SP",
            SetRule::Extend => "EXTEND",
            SetRule::Dp => "DP",
            SetRule::Var => "VAR",
            SetRule::Single => "(single PART)",
            SetRule::Union => "(union SET SET)",
        }
    }
}

/// The fitted production probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Theta {
    pub p_ri: f64,
    pub p_ai: f64,
    pub set: [f64; 6],
}

impl Default for Theta {
    fn default() -> Self {
        Theta { p_ri: 0.5, p_ai: 0.5, set: [1.0 / 6.0; 6] }
    }
}

impl Theta {
    pub fn validate(&self) -> Result<(), GrammarError> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if !unit(self.p_ri) || !unit(self.p_ai) || !self.set.iter().all(|&x| unit(x)) {
            return Err(GrammarError::InvalidTheta(format!("{self:?} has entries outside [0, 1]")));
        }
        let s: f64 = self.set.iter().sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(GrammarError::InvalidTheta(format!("SET probabilities sum to {s}")));
        }
        Ok(())
    }

    /// Flattened as `[p_RI, p_AI, set...]`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = vec![self.p_ri, self.p_ai];
        v.extend(self.set);
        v
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Lesions {
    pub dp_off: bool,
    pub var_off: bool,
}

impl Lesions {
    pub const NONE: Lesions = Lesions { dp_off: false, var_off: false };
    pub const NO_DP: Lesions = Lesions { dp_off: true, var_off: false };
    pub const NO_VAR: Lesions = Lesions { dp_off: false, var_off: true };

    pub fn label(self) -> &'static str {
        match (self.dp_off, self.var_off) {
            (false, false) => "full",
            (true, false) => "no-dp",
            (false, true) => "no-var",
            (true, true) => "no-dp-no-var",
        }
    }
}

/// A grammar instance: effective probabilities after lesions plus the depth
/// cap that truncates the program space.
#[derive(Debug, Clone, PartialEq)]
pub struct Grammar {
    theta: Theta,
    lesions: Lesions,
    pub max_depth: usize,
    log_theta: [f64; N_RULES],
}

impl Default for Grammar {
    fn default() -> Self {
        Grammar::new(Theta::default(), Lesions::NONE).expect("uniform grammar is valid")
    }
}

/// Uniform production probabilities, no lesions.
pub fn default_grammar() -> Grammar {
    Grammar::default()
}

impl Grammar {
    pub fn new(theta: Theta, lesions: Lesions) -> Result<Grammar, GrammarError> {
        theta.validate()?;
        let mut t = theta;
        if lesions.dp_off {
            t.set[SetRule::Dp as usize] = 0.0;
        }
        if lesions.var_off {
            t.set[SetRule::Var as usize] = 0.0;
        }
        let s: f64 = t.set.iter().sum();
        if s <= 0.0 {
            return Err(GrammarError::AllRulesLesioned("SET".into()));
        }
        for x in &mut t.set {
            *x /= s;
        }
        let mut log_theta = [0.0; N_RULES];
        log_theta[0] = t.p_ri.ln();
        log_theta[1] = (1.0 - t.p_ri).ln();
        log_theta[2] = t.p_ai.ln();
        log_theta[3] = (1.0 - t.p_ai).ln();
        for (i, x) in t.set.iter().enumerate() {
            log_theta[4 + i] = x.ln();
        }
        Ok(Grammar { theta: t, lesions, max_depth: DEFAULT_MAX_DEPTH, log_theta })
    }

    pub fn with_max_depth(mut self, d: usize) -> Self {
        self.max_depth = d;
        self
    }

    pub fn theta(&self) -> &Theta {
        &self.theta
    }

    pub fn lesions(&self) -> Lesions {
        self.lesions
    }

    pub fn log_theta(&self) -> &[f64; N_RULES] {
        &self.log_theta
    }

    /// Same grammar with additional rules switched off.
    pub fn lesion(&self, flags: Lesions) -> Result<Grammar, GrammarError> {
        let both = Lesions { dp_off: self.lesions.dp_off || flags.dp_off, var_off: self.lesions.var_off || flags.var_off };
        Ok(Grammar::new(self.theta, both)?.with_max_depth(self.max_depth))
    }

    /// Names of the free probabilities; lesioned branches are not free.
    pub fn fitted_mask(&self) -> Vec<&'static str> {
        let mut v = vec!["p_RI", "p_AI"];
        for r in SetRule::ALL {
            let off = (r == SetRule::Dp && self.lesions.dp_off) || (r == SetRule::Var && self.lesions.var_off);
            if !off {
                v.push(match r {
                    SetRule::AttachSp => "SET.attach_sp",
                    SetRule::Extend => "SET.extend",
                    SetRule::Dp => "SET.dp",
                    SetRule::Var => "SET.var",
                    SetRule::Single => "SET.single",
                    SetRule::Union => "SET.union",
                });
            }
        }
        v
    }

    /// `log P(h)` from rule-usage counts and the fixed uniform part.
    pub fn log_prior_from(&self, counts: &RuleCounts, fixed: f64) -> f64 {
        counts.dot(&self.log_theta) + fixed
    }

    /// `(1/T_p) · Σ log θ` over the derivation of `p` in the context of one
    /// trial universe.
    pub fn log_prior(&self, p: &Expr, u: &crate::token::Universe, t_p: f64) -> Result<f64, GrammarError> {
        let (counts, fixed) = log_gen(p, Nt::Start, u, 0)?;
        if p.depth() > self.max_depth {
            return Err(GrammarError::NotDerivable(format!("deeper than {}", self.max_depth)));
        }
        let lp = self.log_prior_from(&counts, fixed);
        if lp == f64::NEG_INFINITY {
            return Err(GrammarError::NotDerivable("uses a rule with probability 0".into()));
        }
        Ok(lp / t_p)
    }

    /// Expected-offspring matrix over nonterminals (rows: parent).
    pub fn mean_matrix(&self) -> [[f64; 11]; 11] {
        let ix = |n: Nt| Nt::ALL.iter().position(|&m| m == n).unwrap();
        let mut m = [[0.0; 11]; 11];
        let mut add = |a: Nt, b: Nt, w: f64| m[ix(a)][ix(b)] += w;
        let t = &self.theta;
        add(Nt::Start, Nt::Set, 1.0);
        add(Nt::Start, Nt::Angle, 1.0 - t.p_ri);
        add(Nt::Set, Nt::AttachSp, t.set[0]);
        add(Nt::Set, Nt::Extend, t.set[1]);
        add(Nt::Set, Nt::Dp, t.set[2]);
        add(Nt::Set, Nt::Var, t.set[3]);
        add(Nt::Set, Nt::Part, t.set[4]);
        add(Nt::Set, Nt::Set, 2.0 * t.set[5]);
        add(Nt::AttachSp, Nt::Part, 2.0);
        add(Nt::AttachSp, Nt::Config, 1.0 - t.p_ai);
        add(Nt::Extend, Nt::AttachSp, 1.0);
        add(Nt::Extend, Nt::Part, 1.0);
        add(Nt::Extend, Nt::Config, 0.5);
        add(Nt::Dp, Nt::Part, 0.5);
        add(Nt::Dp, Nt::PartSet, 0.5);
        add(Nt::Var, Nt::VBody, 1.0);
        add(Nt::Var, Nt::PartSet, 1.0);
        add(Nt::VBody, Nt::Config, 1.0 / 3.0);
        add(Nt::VBody, Nt::AttachSp, 1.0 / 3.0);
        m
    }

    /// Spectral radius of the mean matrix; below 1 means derivations are
    /// finite with probability 1 and have finite expected size.
    pub fn spectral_radius(&self) -> f64 {
        let m = self.mean_matrix();
        // power iteration on a nonnegative matrix, from a positive start
        let mut v = [1.0f64; 11];
        let mut rho = 0.0;
        for _ in 0..500 {
            let mut w = [0.0; 11];
            for i in 0..11 {
                for j in 0..11 {
                    w[i] += m[i][j] * v[j];
                }
            }
            let norm = w.iter().cloned().fold(0.0, f64::max);
            if norm == 0.0 {
                return 0.0;
            }
            rho = norm / v.iter().cloned().fold(0.0, f64::max);
            for x in &mut w {
                *x /= norm;
            }
            v = w;
        }
        rho
    }

    /// The grammar file: nonterminals, rule lists, probabilities and lesions.
    pub fn to_json(&self) -> serde_json::Value {
        let t = &self.theta;
        let set_rules: Vec<_> = SetRule::ALL.iter().map(|r| json!([r.name(), t.set[*r as usize]])).collect();
        json!({
            "version": 1,
            "nonterminals": Nt::ALL.iter().map(|n| n.name()).collect::<Vec<_>>(),
            "rules": {
                "START": [["(rotate SET)", t.p_ri], ["(rotate* SET ANGLE)", 1.0 - t.p_ri]],
                "SET": set_rules,
                "ATTACH_SP": [["(attach PART PART)", t.p_ai], ["(attach* PART PART CONFIG)", 1.0 - t.p_ai]],
                "EXTEND": [["(attach ATTACH_SP PART)", 0.5], ["(attach* ATTACH_SP PART CONFIG)", 0.5]],
                "DP": [["(has PART)", 0.5], ["(oneof PARTSET)", 0.5]],
                "VAR": [["(map (lambda x VBODY) PARTSET)", 1.0]],
                "VBODY": [["(attach x x)", 1.0/3.0], ["(attach* x x CONFIG)", 1.0/3.0], ["(attach ATTACH_SP x)", 1.0/3.0]],
                "PART": "uniform over the trial bank",
                "PARTSET": "uniform over nonempty subsets of the trial bank",
                "CONFIG": "uniform over configuration ids of the operand pair",
                "ANGLE": [["0", 0.25], ["90", 0.25], ["180", 0.25], ["270", 0.25]],
            },
            "theta": t,
            "lesions": self.lesions,
            "max_depth": self.max_depth,
        })
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Grammar, GrammarError> {
        let theta: Theta = serde_json::from_value(v["theta"].clone()).map_err(|e| GrammarError::Parse(e.to_string()))?;
        let lesions: Lesions = serde_json::from_value(v["lesions"].clone()).unwrap_or_default();
        let g = Grammar::new(theta, lesions)?;
        Ok(match v["max_depth"].as_u64() {
            Some(d) => g.with_max_depth(d as usize),
            None => g,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lesions_zero_and_renormalize() {
        let g = default_grammar();
        let nd = g.lesion(Lesions::NO_DP).unwrap();
        assert_eq!(nd.theta().set[SetRule::Dp as usize], 0.0);
        assert!((nd.theta().set.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((nd.theta().set[0] - 0.2).abs() < 1e-12);
        assert_eq!(nd.fitted_mask().len(), 7);
        let both = nd.lesion(Lesions::NO_VAR).unwrap();
        assert_eq!(both.fitted_mask().len(), 6);
        assert!(both.spectral_radius() < 1.0);
    }

    #[test]
    fn all_rules_lesioned_is_an_error() {
        let t = Theta { set: [0.0, 0.0, 0.5, 0.5, 0.0, 0.0], ..Theta::default() };
        let err = Grammar::new(t, Lesions { dp_off: true, var_off: true }).unwrap_err();
        assert_eq!(err, GrammarError::AllRulesLesioned("SET".into()));
    }

    #[test]
    fn spectral_radius_matches_union_branching() {
        // only SET -> (union SET SET) recurses, so the radius is 2·θ_union
        for u in [0.0, 0.1, 1.0 / 6.0, 0.3, 0.45] {
            let rest = (1.0 - u) / 5.0;
            let t = Theta { set: [rest, rest, rest, rest, rest, u], ..Theta::default() };
            let g = Grammar::new(t, Lesions::NONE).unwrap();
            assert!((g.spectral_radius() - 2.0 * u).abs() < 1e-9, "{u}");
        }
    }

    #[test]
    fn grammar_file_round_trips() {
        let g = Grammar::new(Theta { p_ri: 0.9, ..Theta::default() }, Lesions::NO_VAR).unwrap();
        let back = Grammar::from_json(&g.to_json()).unwrap();
        assert_eq!(back, g);
    }
}
