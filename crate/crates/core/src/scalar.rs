//! Scalar abstraction shared by every numeric routine in the crate.

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Real scalar usable by the MNL calculus, estimators and planners.
///
/// Implemented for `f32` and `f64`. Tolerances quoted for `f64` are widened
/// to a small multiple of machine epsilon when the type is less precise.
pub trait Scalar: RealField + Copy + FromPrimitive + ToPrimitive {
    /// Converts an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable in scalar type")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// `max(base, 64·ε)`, so `f64` tolerances stay meaningful for `f32`.
    #[inline]
    fn tol(base: f64) -> Self {
        let floor = Self::default_epsilon() * Self::lit(64.0);
        Self::lit(base).max(floor)
    }

    #[inline]
    fn is_finite_value(self) -> bool {
        self.as_f64().is_finite()
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
