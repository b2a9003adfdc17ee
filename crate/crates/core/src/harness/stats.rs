//! Evaluation statistics.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StatsError {
    #[error("inputs have lengths {0} and {1}")]
    Length(usize, usize),
    #[error("at least two observations are needed")]
    TooFew,
    #[error("zero variance")]
    DegenerateVariance,
}

fn check(a: &[f64], b: &[f64]) -> Result<(), StatsError> {
    if a.len() != b.len() {
        return Err(StatsError::Length(a.len(), b.len()));
    }
    if a.len() < 2 {
        return Err(StatsError::TooFew);
    }
    Ok(())
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

pub fn pearson_r(pred: &[f64], human: &[f64]) -> Result<f64, StatsError> {
    check(pred, human)?;
    let (mx, my) = (mean(pred), mean(human));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in pred.iter().zip(human) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(StatsError::DegenerateVariance);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    /// Two-sided.
    pub p: f64,
    pub dof: usize,
}

/// Two-sided paired t-test on `a[i] - b[i]`.
pub fn paired_t(a: &[f64], b: &[f64]) -> Result<TTest, StatsError> {
    check(a, b)?;
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = d.len();
    let m = mean(&d);
    let var = d.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
    let dof = n - 1;
    if var == 0.0 {
        if m == 0.0 {
            return Ok(TTest { t: 0.0, p: 1.0, dof });
        }
        return Err(StatsError::DegenerateVariance);
    }
    let t = m / (var / n as f64).sqrt();
    Ok(TTest { t, p: two_sided_p(t, dof as f64), dof })
}

/// `P(|T| ≥ |t|)` for Student's t with `dof` degrees of freedom.
pub fn two_sided_p(t: f64, dof: f64) -> f64 {
    let dist = StudentsT::new(0.0, 1.0, dof).expect("positive degrees of freedom");
    (2.0 * dist.sf(t.abs())).min(1.0)
}

/// Mean natural-log likelihood per token.
pub fn per_token_loglik(logps: &[f64]) -> f64 {
    if logps.is_empty() {
        return f64::NAN;
    }
    mean(logps)
}
