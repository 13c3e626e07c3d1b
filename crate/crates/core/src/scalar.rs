//! Numeric abstractions shared by the scoring, gating and metric code.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_rational::Ratio;
use num_traits::{Float, FromPrimitive, Num, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating-point scalar used for feature weights, similarities and SNR values.
pub trait Real:
    Float + FromPrimitive + Sum + Debug + Display + Default + Send + Sync + Serialize + DeserializeOwned + 'static
{
    /// Converts a configuration value (always carried as `f64`) into this scalar.
    fn from_config(value: f64) -> Self {
        Self::from_f64(value).expect("f64 converts to every Real")
    }

    fn from_len(n: usize) -> Self {
        Self::from_usize(n).expect("usize converts to every Real")
    }
}

impl<T> Real for T where
    T: Float + FromPrimitive + Sum + Debug + Display + Default + Send + Sync + Serialize + DeserializeOwned + 'static
{
}

/// A number that count ratios can be expressed in.
///
/// Implemented for the float types and for exact rationals, so percentages
/// derived from integer counts can be checked without rounding error.
pub trait Quantity: Num + Copy + PartialOrd + Debug {
    fn from_count(n: u64) -> Self;

    /// Lossy view used for display and serialization.
    fn to_f64(&self) -> f64;
}

impl Quantity for f64 {
    fn from_count(n: u64) -> Self {
        n as f64
    }

    fn to_f64(&self) -> f64 {
        *self
    }
}

impl Quantity for f32 {
    fn from_count(n: u64) -> Self {
        n as f32
    }

    fn to_f64(&self) -> f64 {
        f64::from(*self)
    }
}

impl Quantity for Ratio<i64> {
    fn from_count(n: u64) -> Self {
        Ratio::from_integer(i64::try_from(n).expect("count fits in i64"))
    }

    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
}

impl Quantity for Ratio<i128> {
    fn from_count(n: u64) -> Self {
        Ratio::from_integer(i128::from(n))
    }

    fn to_f64(&self) -> f64 {
        *self.numer() as f64 / *self.denom() as f64
    }
}

/// Rounds half away from zero to `decimals` places, the convention used for
/// every percentage shown in reports.
pub fn round_half_up(value: f64, decimals: u32) -> f64 {
    let factor = 10f64.powi(decimals as i32);
    let scaled = (value.abs() * factor + 0.5).floor() / factor;
    scaled.copysign(value)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding_is_half_up() {
        assert_eq!(round_half_up(3.5519, 2), 3.55);
        assert_eq!(round_half_up(3.4571, 2), 3.46);
        assert_eq!(round_half_up(0.125, 2), 0.13);
        assert_eq!(round_half_up(-1.125, 2), -1.13);
        assert_eq!(round_half_up(25.45, 1), 25.5);
    }

    #[test]
    fn rational_counts_are_exact() {
        let r = <Ratio<i64> as Quantity>::from_count(5532) * Ratio::from_integer(100)
            / <Ratio<i64> as Quantity>::from_count(155_745);
        assert_eq!(r, Ratio::new(553_200, 155_745));
        assert!((Quantity::to_f64(&r) - 3.551_959_934_508).abs() < 1e-9);
    }
}
