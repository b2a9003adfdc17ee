//! Scalar abstraction for the probability-level code.

use num_traits::{Float, FloatConst, FromPrimitive};
use std::fmt::{Debug, Display};
use std::iter::Sum;

/// Floating point type that posteriors, predictive distributions and
/// statistics can be computed in.
pub trait Real: Float + FloatConst + FromPrimitive + Sum + Debug + Display + Send + Sync + 'static {
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("representable")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// `log Σ exp(x)` without overflow; `-inf` for an empty or all `-inf` input.
pub fn log_sum_exp<R: Real>(xs: &[R]) -> R {
    let m = xs.iter().copied().fold(R::neg_infinity(), R::max);
    if m == R::neg_infinity() {
        return m;
    }
    m + xs.iter().map(|&x| (x - m).exp()).sum::<R>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_sum_exp_matches_direct() {
        let xs = [0.1f64, -2.0, 3.5];
        let direct = xs.iter().map(|x| x.exp()).sum::<f64>().ln();
        assert!((log_sum_exp(&xs) - direct).abs() < 1e-12);
        assert_eq!(log_sum_exp::<f32>(&[]), f32::NEG_INFINITY);
        assert!((log_sum_exp(&[1000.0f64, 1000.0]) - (1000.0 + 2f64.ln())).abs() < 1e-9);
    }
}
