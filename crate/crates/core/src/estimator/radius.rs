//! Confidence radii and the theoretical exploration length.

use crate::scalar::Scalar;

const SELF_CONCORDANCE: f64 = 4.242_640_687_119_285; // 3√2

/// Squared radius `β⁰_{τ+1}(δ)` of the exploration confidence sets:
/// `(1+3√2)[(B+3)√(d log((τ+1)H/δ)) + (τ+2)^{1/4}(κ/ρ)^{3/2} d log(1+(τ+1)/d)]`.
#[allow(clippy::too_many_arguments)]
pub fn exploration_radius_sq<T: Scalar>(tau: usize, b: T, d: usize, horizon: usize, delta: T, kappa: T, rho: T) -> T {
    let d_t = T::from_usize(d).unwrap();
    let t1 = T::from_usize(tau + 1).unwrap();
    let hz = T::from_usize(horizon).unwrap();
    let first = (b + T::lit(3.0)) * (d_t * (t1 * hz / delta).ln()).sqrt();
    let second = T::from_usize(tau + 2).unwrap().powf(T::lit(0.25))
        * (kappa / rho).powf(T::lit(1.5))
        * d_t
        * (T::one() + t1 / d_t).ln();
    (T::one() + T::lit(SELF_CONCORDANCE)) * (first + second)
}

/// `beta_scale·[√((2/3)·d·log(t/δ)) + 24·B·√d]`.
pub fn learning_radius<T: Scalar>(t: usize, delta: T, d: usize, b: T, beta_scale: T) -> T {
    let d_t = T::from_usize(d).unwrap();
    let t_t = T::from_usize(t.max(1)).unwrap();
    let log_term = (t_t / delta).ln().max(T::zero());
    beta_scale * ((T::lit(2.0 / 3.0) * d_t * log_term).sqrt() + T::lit(24.0) * b * d_t.sqrt())
}

/// Exploration length, with a flag when the formula exceeds `u64`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TauValue {
    pub value: u64,
    pub saturated: bool,
}

/// `⌈4⁵(κ/ρ)⁸(1+3√2)⁴ d⁶ (B+3)² log(TH/δ) [log(1+T/d)]⁶⌉`.
pub fn theoretical_tau(kappa: f64, rho: f64, d: usize, b: f64, episodes: usize, horizon: usize, delta: f64) -> TauValue {
    let d_f = d as f64;
    let t_f = episodes as f64;
    let raw = 4f64.powi(5)
        * (kappa / rho).powi(8)
        * (1.0 + SELF_CONCORDANCE).powi(4)
        * d_f.powi(6)
        * (b + 3.0).powi(2)
        * (t_f * horizon as f64 / delta).ln()
        * (1.0 + t_f / d_f).ln().powi(6);
    if !raw.is_finite() || raw >= u64::MAX as f64 {
        log::warn!("theoretical exploration length {raw:e} overflows u64; saturating");
        return TauValue {
            value: u64::MAX,
            saturated: true,
        };
    }
    TauValue {
        value: raw.ceil() as u64,
        saturated: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn learning_radius_reference_value() {
        let r: f64 = learning_radius(100, 0.1, 2, 1.0, 1.0);
        let expected = ((4.0f64 / 3.0) * 1000f64.ln()).sqrt() + 24.0 * 2f64.sqrt();
        assert_relative_eq!(r, expected, epsilon = 1e-12);
        assert!((r - 36.98).abs() < 0.01);
        assert_eq!(learning_radius(100, 0.1, 2, 1.0, 0.0f64), 0.0);
    }

    #[test]
    fn tau_saturates_on_overflow() {
        let t = theoretical_tau(1e30, 1e-3, 64, 100.0, 1_000_000, 100, 1e-3);
        assert!(t.saturated);
        assert_eq!(t.value, u64::MAX);
    }
}
