use nalgebra::DVector;

use crate::estimator::Ellipsoid;
use crate::error::{Error, Result};
use crate::mnl::MnlContext;
use crate::scalar::Scalar;

const GOLDEN_EVALS: usize = 40;
const MAX_HALVINGS: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepRule {
    /// `γ_k = 2/(k+2)`, halved until the objective does not decrease.
    Classic,
    /// Golden-section search for the best step on `[0, 1]`.
    LineSearch,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FwConfig {
    pub max_iters: usize,
    pub step_rule: StepRule,
    /// Stop once the dual gap `gᵀ(s − θ)` falls to this value.
    pub gap_tol: f64,
    /// Also run once from the support point of the gradient at the center.
    pub restart: bool,
}

impl Default for FwConfig {
    fn default() -> Self {
        Self {
            max_iters: 30,
            step_rule: StepRule::Classic,
            gap_tol: 1e-6,
            restart: true,
        }
    }
}

impl FwConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::invalid("Frank-Wolfe needs at least one iteration"));
        }
        if !(self.gap_tol >= 0.0) {
            return Err(Error::invalid("Frank-Wolfe gap tolerance must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FwOutcome<T: Scalar> {
    pub theta: DVector<T>,
    pub objective: T,
    /// Objective after each accepted iterate of the run that produced `theta`.
    pub trace: Vec<T>,
}

fn objective<T: Scalar>(ctx: &MnlContext<T>, values: &DVector<T>, theta: &DVector<T>) -> T {
    ctx.probs(theta).dot(values)
}

/// `∇(pᵀv) = Φᵀ(p ⊙ (v − pᵀv))`.
fn gradient<T: Scalar>(ctx: &MnlContext<T>, values: &DVector<T>, theta: &DVector<T>) -> (T, DVector<T>) {
    let p = ctx.probs(theta);
    let mean = p.dot(values);
    let w = p.zip_map(values, |pi, vi| pi * (vi - mean));
    (mean, ctx.matrix().tr_mul(&w))
}

fn run<T: Scalar>(
    set: &Ellipsoid<T>,
    ctx: &MnlContext<T>,
    values: &DVector<T>,
    start: DVector<T>,
    cfg: &FwConfig,
) -> FwOutcome<T> {
    let gap_tol = T::lit(cfg.gap_tol);
    let mut x = start;
    let mut fx = objective(ctx, values, &x);
    let mut trace = vec![fx];
    for k in 0..cfg.max_iters {
        let (_, g) = gradient(ctx, values, &x);
        let s = set.support_point(&g);
        let dir = &s - &x;
        if g.dot(&dir) <= gap_tol {
            break;
        }
        let next = match cfg.step_rule {
            StepRule::Classic => {
                let mut gamma = T::lit(2.0) / T::from_usize(k + 2).unwrap();
                let mut found = None;
                for _ in 0..MAX_HALVINGS {
                    let y = &x + &dir * gamma;
                    let fy = objective(ctx, values, &y);
                    if fy >= fx {
                        found = Some((y, fy));
                        break;
                    }
                    gamma *= T::lit(0.5);
                }
                found
            }
            StepRule::LineSearch => {
                let at = |gamma: T| objective(ctx, values, &(&x + &dir * gamma));
                let ratio = T::lit(0.618_033_988_749_894_8);
                let (mut lo, mut hi) = (T::zero(), T::one());
                let mut m1 = hi - ratio * (hi - lo);
                let mut m2 = lo + ratio * (hi - lo);
                let (mut f1, mut f2) = (at(m1), at(m2));
                for _ in 0..GOLDEN_EVALS {
                    if f1 < f2 {
                        lo = m1;
                        m1 = m2;
                        f1 = f2;
                        m2 = lo + ratio * (hi - lo);
                        f2 = at(m2);
                    } else {
                        hi = m2;
                        m2 = m1;
                        f2 = f1;
                        m1 = hi - ratio * (hi - lo);
                        f1 = at(m1);
                    }
                }
                let f_end = at(T::one());
                let (gamma, fy) = if f_end >= f1.max(f2) {
                    (T::one(), f_end)
                } else if f1 >= f2 {
                    (m1, f1)
                } else {
                    (m2, f2)
                };
                (fy >= fx).then(|| (&x + &dir * gamma, fy))
            }
        };
        match next {
            Some((y, fy)) => {
                x = y;
                fx = fy;
                trace.push(fx);
            }
            None => break,
        }
    }
    FwOutcome {
        theta: x,
        objective: fx,
        trace,
    }
}

/// Local maximiser of `Σ p^{s'}(θ)·values[s']` over `set` by Frank-Wolfe.
///
/// `values` is indexed like the context's outcomes. Iterates are convex
/// combinations of points of the set and the objective never decreases.
pub fn fw_inner_max<T: Scalar>(
    set: &Ellipsoid<T>,
    ctx: &MnlContext<T>,
    values: &DVector<T>,
    cfg: &FwConfig,
) -> Result<FwOutcome<T>> {
    cfg.validate()?;
    if values.len() != ctx.len() {
        return Err(Error::invalid(format!(
            "got {} values for {} outcomes",
            values.len(),
            ctx.len()
        )));
    }
    if values.iter().any(|v| !v.is_finite_value()) {
        return Err(Error::invalid("values must be finite"));
    }
    if set.dim() != ctx.dim() {
        return Err(Error::invalid("ellipsoid and context dimensions differ"));
    }
    let center = set.center().clone();
    if set.radius() <= T::zero() || ctx.len() == 1 {
        let objective = objective(ctx, values, &center);
        return Ok(FwOutcome {
            theta: center,
            objective,
            trace: vec![objective],
        });
    }
    let (_, g0) = gradient(ctx, values, &center);
    let restart_from = set.support_point(&g0);
    let mut best = run(set, ctx, values, center, cfg);
    if cfg.restart {
        let other = run(set, ctx, values, restart_from, cfg);
        if other.objective > best.objective {
            best = other;
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn ctx3() -> MnlContext<f64> {
        MnlContext::new(DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, -0.7, -0.7])).unwrap()
    }

    fn grid_max(set: &Ellipsoid<f64>, ctx: &MnlContext<f64>, values: &DVector<f64>) -> f64 {
        let l_inv_t = set.shape().clone().cholesky().unwrap().l().transpose().try_inverse().unwrap();
        let n = 600;
        let r = set.radius();
        let mut best = f64::NEG_INFINITY;
        for i in 0..=n {
            for j in 0..=n {
                let u = DVector::from_row_slice(&[-r + 2.0 * r * i as f64 / n as f64, -r + 2.0 * r * j as f64 / n as f64]);
                if u.norm() <= r {
                    best = best.max(objective(ctx, values, &(set.center() + &l_inv_t * u)));
                }
            }
        }
        best
    }

    #[test]
    fn zero_radius_returns_center() {
        let set = Ellipsoid::ball(DVector::from_row_slice(&[0.2, 0.1]), 0.0).unwrap();
        let v = DVector::from_row_slice(&[1.0, 2.0, 0.0]);
        let out = fw_inner_max(&set, &ctx3(), &v, &FwConfig::default()).unwrap();
        assert_eq!(out.theta, *set.center());
        assert_eq!(out.objective, objective(&ctx3(), &v, set.center()));
    }

    #[test]
    fn constant_values_give_constant_objective() {
        let set = Ellipsoid::ball(DVector::zeros(2), 3.0).unwrap();
        let out = fw_inner_max(&set, &ctx3(), &DVector::from_element(3, 2.5), &FwConfig::default()).unwrap();
        assert!((out.objective - 2.5).abs() < 1e-14);
    }

    #[test]
    fn matches_grid_and_is_monotone() {
        let set = Ellipsoid::new(
            DVector::from_row_slice(&[0.3, -0.2]),
            DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]),
            1.5,
        )
        .unwrap();
        let two = MnlContext::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.2, -0.3, 0.8])).unwrap();
        for (ctx, v) in [
            (two, DVector::from_row_slice(&[0.0, 3.0])),
            (ctx3(), DVector::from_row_slice(&[2.0, 0.5, 1.0])),
        ] {
            for rule in [StepRule::Classic, StepRule::LineSearch] {
                let cfg = FwConfig {
                    step_rule: rule,
                    ..FwConfig::default()
                };
                let out = fw_inner_max(&set, &ctx, &v, &cfg).unwrap();
                assert!(set.contains(&out.theta, 1e-10));
                assert!(out.trace.windows(2).all(|w| w[1] >= w[0]));
                let g = grid_max(&set, &ctx, &v);
                assert!((out.objective - g).abs() < 1e-3, "{rule:?}: {} vs {g}", out.objective);
            }
        }
    }

    #[test]
    fn rejects_mismatched_values() {
        let set = Ellipsoid::ball(DVector::zeros(2), 1.0).unwrap();
        assert!(fw_inner_max(&set, &ctx3(), &DVector::zeros(2), &FwConfig::default()).is_err());
        let cfg = FwConfig {
            max_iters: 0,
            ..FwConfig::default()
        };
        assert!(fw_inner_max(&set, &ctx3(), &DVector::zeros(3), &cfg).is_err());
    }
}
