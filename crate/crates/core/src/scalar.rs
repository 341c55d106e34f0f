//! Scalar abstraction for probability masses.
//!
//! Models, distributions and distance metrics are generic over the
//! floating-point type used for probabilities. `f64` is the default
//! everywhere through the aliases at the crate root.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating-point type usable as a probability mass: f32 or f64.
pub trait Probability:
    Float
    + FromPrimitive
    + ToPrimitive
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + std::iter::Sum
    + 'static
{
    /// Lossy conversion from f64, used for literals and counts.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("representable probability")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite probability")
    }

    /// Numerically stable `ln(exp(a) + exp(b))`.
    fn log_add_exp(self, other: Self) -> Self {
        if self == Self::neg_infinity() {
            return other;
        }
        if other == Self::neg_infinity() {
            return self;
        }
        let (hi, lo) = if self > other { (self, other) } else { (other, self) };
        hi + (lo - hi).exp().ln_1p()
    }
}

impl Probability for f32 {}
impl Probability for f64 {}

/// `ln Σ exp(x_i)` over an iterator of log values.
pub fn log_sum_exp<P: Probability>(values: impl IntoIterator<Item = P>) -> P {
    values
        .into_iter()
        .fold(P::neg_infinity(), |acc, x| acc.log_add_exp(x))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_add_exp_matches_direct() {
        let a = 0.3f64.ln();
        let b = 0.2f64.ln();
        assert!((a.log_add_exp(b).exp() - 0.5).abs() < 1e-15);
        assert_eq!(f64::neg_infinity().log_add_exp(b), b);
        let s: f32 = log_sum_exp([0.25f32.ln(), 0.25f32.ln(), 0.5f32.ln()]);
        assert!(s.abs() < 1e-6);
    }
}
