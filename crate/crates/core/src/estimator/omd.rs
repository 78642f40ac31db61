use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::ellipsoid::{diameter, Ellipsoid};
use super::radius::learning_radius;
use crate::error::{Error, Result};
use crate::linalg;
use crate::mnl::{FeatureMap, MnlContext};
use crate::scalar::Scalar;

const BISECTION_MAX_ITERS: usize = 200;
const BRACKET_MAX_DOUBLINGS: usize = 400;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorConfig<T> {
    /// Ridge `λ` of the initial design matrix.
    pub lambda: T,
    pub delta: T,
    /// Norm bound `B` on the true parameters.
    pub param_bound: T,
    /// Multiplier on the loss gradient in the OMD surrogate.
    pub eta_omd: T,
    pub beta_scale: T,
}

impl<T: Scalar> EstimatorConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > T::zero()) {
            return Err(Error::invalid("lambda must be positive"));
        }
        if !(self.delta > T::zero() && self.delta <= T::one()) {
            return Err(Error::invalid("delta must lie in (0, 1]"));
        }
        if !(self.param_bound >= T::zero()) || !(self.eta_omd >= T::zero()) || !(self.beta_scale >= T::zero()) {
            return Err(Error::invalid("param_bound, eta_omd and beta_scale must be non-negative"));
        }
        Ok(())
    }
}

/// `⟨g, θ − θ̂⟩ + ½‖θ − θ̂‖²_{𝓗̃}`.
pub fn surrogate_value<T: Scalar>(theta: &DVector<T>, theta_hat: &DVector<T>, h_tilde: &DMatrix<T>, g: &DVector<T>) -> T {
    let diff = theta - theta_hat;
    g.dot(&diff) + T::lit(0.5) * linalg::quad_form(h_tilde, &diff)
}

/// Minimiser of [`surrogate_value`] over `set`.
///
/// The unconstrained Newton point is returned when it lies in the set.
/// Otherwise the multiplier `μ` of the constraint is found by bisection, with
/// `θ(μ) = (𝓗̃ + μA)⁻¹(𝓗̃θ̂ − g + μAc)`; the returned point is the feasible end
/// of the final bracket.
pub fn project_surrogate<T: Scalar>(
    set: Option<&Ellipsoid<T>>,
    h_tilde: &DMatrix<T>,
    theta_hat: &DVector<T>,
    g: &DVector<T>,
) -> Result<DVector<T>> {
    let chol = linalg::cholesky(h_tilde)?;
    let candidate = theta_hat - chol.solve(g);
    let Some(set) = set else {
        return Ok(candidate);
    };
    if set.contains(&candidate, T::zero()) {
        return Ok(candidate);
    }
    let r = set.radius();
    if r <= T::zero() {
        return Ok(set.center().clone());
    }
    let a = set.shape();
    let c = set.center();
    let base = h_tilde * theta_hat - g;
    let ac = a * c;
    let point = |mu: T| -> Result<DVector<T>> {
        let m = h_tilde + a * mu;
        Ok(linalg::cholesky(&m)?.solve(&(&base + &ac * mu)))
    };
    let excess = |theta: &DVector<T>| set.distance(theta) - r;

    let mut lo = T::zero();
    let mut hi = T::one();
    let mut hi_point = point(hi)?;
    let mut doublings = 0;
    while excess(&hi_point) > T::zero() {
        lo = hi;
        hi *= T::lit(2.0);
        hi_point = point(hi)?;
        doublings += 1;
        if doublings > BRACKET_MAX_DOUBLINGS {
            return Err(Error::numerical("omd_projection", "could not bracket the multiplier"));
        }
    }
    let tol = T::tol(1e-10);
    for _ in 0..BISECTION_MAX_ITERS {
        if hi - lo <= tol * hi.max(T::one()) || excess(&hi_point) >= -tol * r.max(T::one()) {
            return Ok(hi_point);
        }
        let mid = (lo + hi) * T::lit(0.5);
        let mid_point = point(mid)?;
        if excess(&mid_point) > T::zero() {
            lo = mid;
        } else {
            hi = mid;
            hi_point = mid_point;
        }
    }
    Err(Error::numerical(
        "omd_projection",
        format!(
            "bisection did not converge in {BISECTION_MAX_ITERS} iterations; bracket [{:e}, {:e}]",
            lo.as_f64(),
            hi.as_f64()
        ),
    ))
}

/// Per-checkpoint snapshot of one stage of the estimator.
#[derive(Debug, Clone, Serialize)]
pub struct StageDiagnostic {
    pub t: usize,
    pub h: usize,
    pub theta_error: f64,
    pub radius: f64,
    pub diameter: f64,
    pub log_det: f64,
}

/// Learning-phase estimator: per-stage OMD iterates and design matrices.
#[derive(Debug, Clone)]
pub struct EstimatorState<T: Scalar> {
    config: EstimatorConfig<T>,
    dim: usize,
    theta_hat: Vec<DVector<T>>,
    design: Vec<DMatrix<T>>,
    theta_sets: Option<Vec<Ellipsoid<T>>>,
}

impl<T: Scalar> EstimatorState<T> {
    /// Starts from `θ̂ = 0` and `𝓗 = λI`. With constraint sets, a stage
    /// whose set excludes the origin starts at the set's center instead.
    pub fn new(
        config: EstimatorConfig<T>,
        dim: usize,
        horizon: usize,
        theta_sets: Option<Vec<Ellipsoid<T>>>,
    ) -> Result<Self> {
        config.validate()?;
        if dim == 0 || horizon == 0 {
            return Err(Error::invalid("dimension and horizon must be positive"));
        }
        let zero = DVector::<T>::zeros(dim);
        let theta_hat = match &theta_sets {
            Some(sets) => {
                if sets.len() != horizon || sets.iter().any(|s| s.dim() != dim) {
                    return Err(Error::invalid("need one constraint set of matching dimension per stage"));
                }
                sets.iter()
                    .map(|s| if s.contains(&zero, T::zero()) { zero.clone() } else { s.center().clone() })
                    .collect()
            }
            None => vec![zero; horizon],
        };
        Ok(Self {
            config,
            dim,
            theta_hat,
            design: vec![DMatrix::identity(dim, dim) * config.lambda; horizon],
            theta_sets,
        })
    }

    /// State with given per-stage estimates and design matrices.
    pub fn from_parts(
        config: EstimatorConfig<T>,
        theta_hat: Vec<DVector<T>>,
        design: Vec<DMatrix<T>>,
        theta_sets: Option<Vec<Ellipsoid<T>>>,
    ) -> Result<Self> {
        config.validate()?;
        let dim = theta_hat.first().map_or(0, |t| t.len());
        if dim == 0 || design.len() != theta_hat.len() {
            return Err(Error::invalid("need one non-empty estimate and design matrix per stage"));
        }
        if theta_hat.iter().any(|t| t.len() != dim) || design.iter().any(|m| m.nrows() != dim || !m.is_square()) {
            return Err(Error::invalid("estimates and design matrices must share one dimension"));
        }
        if let Some(sets) = &theta_sets {
            if sets.len() != theta_hat.len() || sets.iter().any(|s| s.dim() != dim) {
                return Err(Error::invalid("need one constraint set of matching dimension per stage"));
            }
        }
        for m in &design {
            linalg::cholesky(m)?;
        }
        Ok(Self {
            config,
            dim,
            theta_hat,
            design,
            theta_sets,
        })
    }

    pub fn config(&self) -> &EstimatorConfig<T> {
        &self.config
    }
    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn horizon(&self) -> usize {
        self.theta_hat.len()
    }
    pub fn theta_hat(&self, h: usize) -> &DVector<T> {
        &self.theta_hat[h]
    }
    pub fn design(&self, h: usize) -> &DMatrix<T> {
        &self.design[h]
    }
    pub fn theta_set(&self, h: usize) -> Option<&Ellipsoid<T>> {
        self.theta_sets.as_ref().map(|s| &s[h])
    }

    pub fn radius(&self, t: usize) -> T {
        let c = &self.config;
        learning_radius(t, c.delta, self.dim, c.param_bound, c.beta_scale)
    }

    /// `C_{t,h} = {θ : ‖θ − θ̂_h‖_{𝓗_h} ≤ β_t(δ)}`.
    pub fn confidence_set(&self, h: usize, t: usize) -> Result<Ellipsoid<T>> {
        self.confidence_set_with_radius(h, self.radius(t))
    }

    pub fn confidence_set_with_radius(&self, h: usize, radius: T) -> Result<Ellipsoid<T>> {
        Ellipsoid::new(self.theta_hat[h].clone(), self.design[h].clone(), radius)
    }

    /// One OMD step at stage `h` on the observed transition `outcome` of `ctx`.
    pub fn omd_update(&mut self, h: usize, ctx: &MnlContext<T>, outcome: usize) -> Result<()> {
        if h >= self.horizon() {
            return Err(Error::invalid(format!("stage {h} out of range")));
        }
        if ctx.dim() != self.dim || outcome >= ctx.len() {
            return Err(Error::invalid("context does not match estimator or outcome out of range"));
        }
        let theta = &self.theta_hat[h];
        let g = ctx.gradient_unchecked(theta, outcome) * self.config.eta_omd;
        let h_tilde = &self.design[h] + ctx.hessian_unchecked(theta);
        let set = self.theta_sets.as_ref().map(|s| &s[h]);
        let next = project_surrogate(set, &h_tilde, theta, &g)?;
        if next.iter().any(|x| !x.is_finite_value()) {
            return Err(Error::numerical("omd_update", format!("non-finite iterate at stage {h}")));
        }
        self.design[h] += ctx.hessian_unchecked(&next);
        linalg::symmetrize(&mut self.design[h]);
        self.theta_hat[h] = next;
        Ok(())
    }

    pub fn diagnostic(&self, h: usize, t: usize, theta_star: &DVector<T>, feature_map: &FeatureMap<T>) -> Result<StageDiagnostic> {
        let set = self.confidence_set(h, t)?;
        Ok(StageDiagnostic {
            t,
            h,
            theta_error: (&self.theta_hat[h] - theta_star).norm().as_f64(),
            radius: set.radius().as_f64(),
            diameter: diameter(&set, feature_map, h)?.as_f64(),
            log_det: linalg::log_det(set.cholesky()).as_f64(),
        })
    }
}
