use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::linalg;
use crate::mnl::FeatureMap;
use crate::scalar::Scalar;

/// `{θ : ‖θ − center‖_shape ≤ radius}` with a positive-definite shape.
///
/// The radius is stored unsquared; sets specified by a squared threshold
/// are converted by the caller.
#[derive(Debug, Clone)]
pub struct Ellipsoid<T: Scalar> {
    center: DVector<T>,
    shape: DMatrix<T>,
    radius: T,
    chol: Cholesky<T, Dyn>,
}

impl<T: Scalar> Ellipsoid<T> {
    pub fn new(center: DVector<T>, shape: DMatrix<T>, radius: T) -> Result<Self> {
        if shape.nrows() != center.len() || !shape.is_square() {
            return Err(Error::invalid("ellipsoid shape does not match center dimension"));
        }
        if !(radius >= T::zero()) || !radius.is_finite_value() {
            return Err(Error::invalid("ellipsoid radius must be finite and non-negative"));
        }
        if center.iter().any(|x| !x.is_finite_value()) {
            return Err(Error::invalid("ellipsoid center must be finite"));
        }
        let mut shape = shape;
        linalg::symmetrize(&mut shape);
        let chol = linalg::cholesky(&shape)?;
        Ok(Self {
            center,
            shape,
            radius,
            chol,
        })
    }

    /// Euclidean ball.
    pub fn ball(center: DVector<T>, radius: T) -> Result<Self> {
        let d = center.len();
        Self::new(center, DMatrix::identity(d, d), radius)
    }

    pub fn center(&self) -> &DVector<T> {
        &self.center
    }
    pub fn shape(&self) -> &DMatrix<T> {
        &self.shape
    }
    pub fn radius(&self) -> T {
        self.radius
    }
    pub fn dim(&self) -> usize {
        self.center.len()
    }
    pub(crate) fn cholesky(&self) -> &Cholesky<T, Dyn> {
        &self.chol
    }

    /// `‖θ − center‖_shape`.
    pub fn distance(&self, theta: &DVector<T>) -> T {
        linalg::quad_form(&self.shape, &(theta - &self.center)).max(T::zero()).sqrt()
    }

    pub fn contains(&self, theta: &DVector<T>, tol: T) -> bool {
        self.distance(theta) <= self.radius + tol
    }

    /// `‖g‖_{shape⁻¹}`.
    pub fn dual_norm(&self, g: &DVector<T>) -> T {
        linalg::inv_quad_form(&self.chol, g).max(T::zero()).sqrt()
    }

    /// Maximiser of `gᵀθ` over the set: `center + radius·shape⁻¹g/‖g‖_{shape⁻¹}`.
    pub fn support_point(&self, g: &DVector<T>) -> DVector<T> {
        let n = self.dual_norm(g);
        if n <= T::zero() || self.radius <= T::zero() {
            return self.center.clone();
        }
        let dir = self.chol.solve(g);
        &self.center + dir * (self.radius / n)
    }

    /// Radial projection onto the set along the segment from the center.
    pub fn clamp(&self, theta: &DVector<T>) -> DVector<T> {
        let dist = self.distance(theta);
        if dist <= self.radius {
            return theta.clone();
        }
        &self.center + (theta - &self.center) * (self.radius / dist)
    }

    pub fn with_radius(&self, radius: T) -> Result<Self> {
        Self::new(self.center.clone(), self.shape.clone(), radius)
    }
}

/// `max_{(a,s,s')} max_{θ₁,θ₂} |(θ₁ − θ₂)ᵀφ(s'|s,a)|` at stage `h`, which for
/// an ellipsoid equals `2·radius·max ‖φ‖_{shape⁻¹}`.
pub fn diameter<T: Scalar>(ellipsoid: &Ellipsoid<T>, feature_map: &FeatureMap<T>, h: usize) -> Result<T> {
    if h >= feature_map.horizon() {
        return Err(Error::invalid(format!("stage {h} out of range")));
    }
    if ellipsoid.dim() != feature_map.dim() {
        return Err(Error::invalid("ellipsoid and feature map dimensions differ"));
    }
    let mut best = T::zero();
    for (_, _, ctx) in feature_map.stage_contexts(h) {
        for i in 0..ctx.len() {
            best = best.max(ellipsoid.dual_norm(&ctx.feature(i)));
        }
    }
    Ok(T::lit(2.0) * ellipsoid.radius() * best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn membership_and_support_point() {
        let e = Ellipsoid::new(
            DVector::from_vec(vec![1.0, -1.0]),
            DMatrix::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 1.0]),
            2.0,
        )
        .unwrap();
        assert!(e.contains(&DVector::from_vec(vec![2.0, -1.0]), 1e-12));
        assert!(!e.contains(&DVector::from_vec(vec![2.1, -1.0]), 1e-12));
        let g = DVector::from_vec(vec![1.0, 0.0]);
        let s = e.support_point(&g);
        assert_relative_eq!(s[0], 2.0, epsilon = 1e-12);
        assert_relative_eq!(e.distance(&s), 2.0, epsilon = 1e-12);
        let far = DVector::from_vec(vec![10.0, 5.0]);
        assert_relative_eq!(e.distance(&e.clamp(&far)), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn rejects_indefinite_shape() {
        let r = Ellipsoid::new(
            DVector::zeros(2),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]),
            1.0,
        );
        assert!(r.is_err());
    }
}
