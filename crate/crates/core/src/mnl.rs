//! The multinomial-logistic transition model.
//!
//! For a stage `h`, state `s` and action `a`, the next state is drawn from
//! the softmax of `φ(s'|s,a)ᵀθ` over the reachable set `S_{h,s,a}`. This
//! module holds the feature storage, the softmax itself, the per-transition
//! logistic loss with its gradient and Hessian, and the non-linearity
//! constants `κ` and `ρ`.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::env::MnlMdp;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Feature vectors of one `(h, s, a)`: row `i` is `φ(s'_i|s,a)` for the
/// `i`-th reachable next state.
#[derive(Debug, Clone, PartialEq)]
pub struct MnlContext<T: Scalar> {
    features: DMatrix<T>,
}

impl<T: Scalar> MnlContext<T> {
    pub fn new(features: DMatrix<T>) -> Result<Self> {
        if features.nrows() == 0 {
            return Err(Error::invalid("context must have at least one outcome"));
        }
        if features.ncols() == 0 {
            return Err(Error::invalid("context features must have positive dimension"));
        }
        if features.iter().any(|x| !x.is_finite_value()) {
            return Err(Error::invalid("context features must be finite"));
        }
        Ok(Self { features })
    }

    pub fn from_rows(rows: &[DVector<T>]) -> Result<Self> {
        let dim = rows.first().map(|r| r.len()).unwrap_or(0);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::invalid("context rows have mismatched dimension"));
        }
        let m = DMatrix::from_fn(rows.len(), dim, |i, j| rows[i][j]);
        Self::new(m)
    }

    /// Number of reachable outcomes `N`.
    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.features.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<T> {
        &self.features
    }

    pub fn feature(&self, i: usize) -> DVector<T> {
        self.features.row(i).transpose()
    }

    pub fn logits(&self, theta: &DVector<T>) -> DVector<T> {
        &self.features * theta
    }

    pub fn max_feature_norm(&self) -> T {
        (0..self.len())
            .map(|i| self.features.row(i).norm())
            .fold(T::zero(), |a, b| a.max(b))
    }

    /// Softmax without input validation (hot path).
    pub(crate) fn probs(&self, theta: &DVector<T>) -> DVector<T> {
        let mut z = self.logits(theta);
        let m = z.max();
        z.apply(|v| *v = (*v - m).exp());
        let total = z.sum();
        z / total
    }

    /// Log-softmax via log-sum-exp, without input validation.
    pub(crate) fn log_probs(&self, theta: &DVector<T>) -> DVector<T> {
        let z = self.logits(theta);
        let m = z.max();
        let lse = m + z.iter().map(|v| (*v - m).exp()).fold(T::zero(), |a, b| a + b).ln();
        z.map(|v| v - lse)
    }

    /// `Φᵀ(p − e_outcome)` without input validation.
    pub(crate) fn gradient_unchecked(&self, theta: &DVector<T>, outcome: usize) -> DVector<T> {
        let mut r = self.probs(theta);
        r[outcome] -= T::one();
        self.features.tr_mul(&r)
    }

    /// `Σ p_i (φ_i − φ̄)(φ_i − φ̄)ᵀ` with `φ̄ = Σ p_i φ_i`; equal to the textbook
    /// form `Σ p φφᵀ − ΣΣ p p' φφ'ᵀ` and PSD by construction.
    pub(crate) fn hessian_unchecked(&self, theta: &DVector<T>) -> DMatrix<T> {
        let p = self.probs(theta);
        self.hessian_from_probs(&p)
    }

    pub(crate) fn hessian_from_probs(&self, p: &DVector<T>) -> DMatrix<T> {
        let mean = self.features.tr_mul(p);
        let mut centered = self.features.clone();
        for i in 0..self.len() {
            let w = p[i].sqrt();
            for j in 0..self.dim() {
                centered[(i, j)] = (centered[(i, j)] - mean[j]) * w;
            }
        }
        centered.tr_mul(&centered)
    }

    fn check_theta(&self, theta: &DVector<T>) -> Result<()> {
        if theta.len() != self.dim() {
            return Err(Error::invalid(format!(
                "theta has dimension {}, context expects {}",
                theta.len(),
                self.dim()
            )));
        }
        if theta.iter().any(|x| !x.is_finite_value()) {
            return Err(Error::invalid("theta must be finite"));
        }
        Ok(())
    }

    fn check_outcome(&self, outcome: usize) -> Result<()> {
        if outcome >= self.len() {
            return Err(Error::invalid(format!(
                "outcome index {outcome} out of range for {} outcomes",
                self.len()
            )));
        }
        Ok(())
    }
}

/// Transition probabilities `p^{s'}(θ)` over the context's outcomes.
pub fn softmax_probs<T: Scalar>(theta: &DVector<T>, ctx: &MnlContext<T>) -> Result<DVector<T>> {
    ctx.check_theta(theta)?;
    Ok(ctx.probs(theta))
}

/// `−log p^{outcome}(θ)`, computed through log-sum-exp.
pub fn logistic_loss<T: Scalar>(theta: &DVector<T>, ctx: &MnlContext<T>, outcome: usize) -> Result<T> {
    ctx.check_theta(theta)?;
    ctx.check_outcome(outcome)?;
    Ok(-ctx.log_probs(theta)[outcome])
}

pub fn loss_gradient<T: Scalar>(
    theta: &DVector<T>,
    ctx: &MnlContext<T>,
    outcome: usize,
) -> Result<DVector<T>> {
    ctx.check_theta(theta)?;
    ctx.check_outcome(outcome)?;
    Ok(ctx.gradient_unchecked(theta, outcome))
}

/// Hessian of the logistic loss; it does not depend on the observed outcome.
pub fn loss_hessian<T: Scalar>(theta: &DVector<T>, ctx: &MnlContext<T>) -> Result<DMatrix<T>> {
    ctx.check_theta(theta)?;
    Ok(ctx.hessian_unchecked(theta))
}

/// Safe bound `κ ≤ U²·e^{4B}`.
pub fn kappa_upper_bound<T: Scalar>(max_reachable: usize, param_bound: T) -> T {
    let u = T::from_usize(max_reachable).expect("usize fits scalar");
    u * u * (T::lit(4.0) * param_bound).exp()
}

/// Known feature map `φ(s'|s,a)` for every stage, with the reachable sets.
///
/// Contexts are stored flat in `(h, s, a)` order and materialised once.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap<T: Scalar> {
    dim: usize,
    horizon: usize,
    num_states: usize,
    num_actions: usize,
    norm_bound: T,
    contexts: Vec<MnlContext<T>>,
    reachable: Vec<Vec<usize>>,
}

impl<T: Scalar> FeatureMap<T> {
    /// `contexts[i]` and `reachable[i]` describe `(h, s, a)` with
    /// `i = (h·S + s)·A + a`. Every feature must satisfy `‖φ‖₂ ≤ norm_bound`.
    pub fn new(
        dim: usize,
        horizon: usize,
        num_states: usize,
        num_actions: usize,
        norm_bound: T,
        contexts: Vec<MnlContext<T>>,
        reachable: Vec<Vec<usize>>,
    ) -> Result<Self> {
        if dim == 0 || horizon == 0 || num_states == 0 || num_actions == 0 {
            return Err(Error::invalid("feature map dimensions must be positive"));
        }
        let expected = horizon * num_states * num_actions;
        if contexts.len() != expected || reachable.len() != expected {
            return Err(Error::invalid(format!(
                "feature map needs {expected} contexts, got {} contexts and {} reachable sets",
                contexts.len(),
                reachable.len()
            )));
        }
        let slack = norm_bound * (T::one() + T::tol(1e-12));
        for (i, (ctx, reach)) in contexts.iter().zip(&reachable).enumerate() {
            if ctx.dim() != dim {
                return Err(Error::invalid(format!("context {i} has dimension {}", ctx.dim())));
            }
            if reach.is_empty() || reach.len() != ctx.len() {
                return Err(Error::invalid(format!(
                    "context {i}: reachable set of size {} for {} feature rows",
                    reach.len(),
                    ctx.len()
                )));
            }
            let mut sorted = reach.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != reach.len() || sorted.iter().any(|&s| s >= num_states) {
                return Err(Error::invalid(format!(
                    "context {i}: reachable states must be distinct and < {num_states}"
                )));
            }
            if ctx.max_feature_norm() > slack {
                return Err(Error::invalid(format!(
                    "context {i}: feature norm exceeds bound {}",
                    norm_bound.as_f64()
                )));
            }
        }
        Ok(Self {
            dim,
            horizon,
            num_states,
            num_actions,
            norm_bound,
            contexts,
            reachable,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn horizon(&self) -> usize {
        self.horizon
    }
    pub fn num_states(&self) -> usize {
        self.num_states
    }
    pub fn num_actions(&self) -> usize {
        self.num_actions
    }
    pub fn norm_bound(&self) -> T {
        self.norm_bound
    }

    #[inline]
    pub fn index(&self, h: usize, s: usize, a: usize) -> usize {
        (h * self.num_states + s) * self.num_actions + a
    }

    pub fn check(&self, h: usize, s: usize, a: usize) -> Result<()> {
        if h >= self.horizon || s >= self.num_states || a >= self.num_actions {
            return Err(Error::invalid(format!(
                "(h={h}, s={s}, a={a}) outside H={}, S={}, A={}",
                self.horizon, self.num_states, self.num_actions
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn context(&self, h: usize, s: usize, a: usize) -> &MnlContext<T> {
        &self.contexts[self.index(h, s, a)]
    }

    #[inline]
    pub fn reachable(&self, h: usize, s: usize, a: usize) -> &[usize] {
        &self.reachable[self.index(h, s, a)]
    }

    /// Position of `next` within the reachable set of `(h, s, a)`.
    pub fn outcome_index(&self, h: usize, s: usize, a: usize, next: usize) -> Option<usize> {
        self.reachable(h, s, a).iter().position(|&x| x == next)
    }

    /// `U = max N_{h,s,a}`.
    pub fn max_reachable(&self) -> usize {
        self.reachable.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// `max_{s,a,s'} ‖φ(s'|s,a)‖₂` at stage `h`.
    pub fn stage_max_norm(&self, h: usize) -> T {
        let mut best = T::zero();
        for s in 0..self.num_states {
            for a in 0..self.num_actions {
                best = best.max(self.context(h, s, a).max_feature_norm());
            }
        }
        best
    }

    /// Iterates over `(s, a, context)` for stage `h` in `(s, a)` order.
    pub fn stage_contexts(&self, h: usize) -> impl Iterator<Item = (usize, usize, &MnlContext<T>)> + '_ {
        let (ns, na) = (self.num_states, self.num_actions);
        (0..ns).flat_map(move |s| (0..na).map(move |a| (s, a, self.context(h, s, a))))
    }
}

/// Non-linearity constants of an instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConstants<T> {
    pub kappa: T,
    pub rho: T,
    /// Parameter-norm bound `B`.
    pub b: T,
}

/// `ρ` exactly and a sampled estimate of `κ`.
///
/// `ρ = min_h max_{s,a,s'} ‖φ‖₂`. For `κ`, the product `p^{s'}p^{s''}` is
/// minimised (its minimum over pairs is the squared smallest probability)
/// over `θ = 0` and `grid_resolution` points of the sphere `‖θ‖₂ = B`:
/// evenly spaced angles for `d = 2`, `±B` for `d = 1`, seeded random
/// directions otherwise. The estimate is capped at [`kappa_upper_bound`].
pub fn exact_kappa_rho<T: Scalar>(mdp: &MnlMdp<T>, grid_resolution: usize) -> Result<ModelConstants<T>> {
    let fm = mdp.feature_map();
    let b = mdp.param_bound();
    let rho = (0..fm.horizon())
        .map(|h| fm.stage_max_norm(h))
        .fold(T::max_value().unwrap_or(T::lit(f64::MAX)), |a, x| a.min(x));

    let mut thetas = vec![DVector::<T>::zeros(fm.dim())];
    thetas.extend(sphere_points(fm.dim(), grid_resolution, b));

    let mut min_prob = T::one();
    for h in 0..fm.horizon() {
        for (_, _, ctx) in fm.stage_contexts(h) {
            for theta in &thetas {
                min_prob = min_prob.min(ctx.probs(theta).min());
            }
        }
    }
    let upper = kappa_upper_bound(fm.max_reachable(), b);
    let kappa = (T::one() / (min_prob * min_prob)).min(upper);
    Ok(ModelConstants { kappa, rho, b })
}

fn sphere_points<T: Scalar>(dim: usize, count: usize, radius: T) -> Vec<DVector<T>> {
    match dim {
        1 => (0..count)
            .map(|k| DVector::from_element(1, if k % 2 == 0 { radius } else { -radius }))
            .collect(),
        2 => (0..count)
            .map(|k| {
                let angle = T::two_pi() * T::from_usize(k).unwrap() / T::from_usize(count).unwrap();
                DVector::from_vec(vec![radius * angle.cos(), radius * angle.sin()])
            })
            .collect(),
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(0x006b_6170_7061);
            (0..count)
                .map(|_| {
                    let v = DVector::<f64>::from_fn(dim, |_, _| StandardNormal.sample(&mut rng));
                    let n = v.norm().max(1e-300);
                    v.map(|x| T::lit(x / n) * radius)
                })
                .collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn ctx(rows: &[&[f64]]) -> MnlContext<f64> {
        let v: Vec<DVector<f64>> = rows.iter().map(|r| DVector::from_row_slice(r)).collect();
        MnlContext::from_rows(&v).unwrap()
    }

    #[test]
    fn zero_logits_give_uniform() {
        let c = ctx(&[&[1.0, 0.0], &[0.0, 1.0], &[0.3, 0.3]]);
        let p = softmax_probs(&DVector::zeros(2), &c).unwrap();
        for v in p.iter() {
            assert_relative_eq!(*v, 1.0 / 3.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn ln3_tilt_gives_nine_tenths() {
        let c = ctx(&[&[1.0], &[-1.0]]);
        let p = softmax_probs(&DVector::from_element(1, 3.0f64.ln()), &c).unwrap();
        assert_relative_eq!(p[0], 0.9, epsilon = 1e-14);
        assert_relative_eq!(p[1], 0.1, epsilon = 1e-14);
    }

    #[test]
    fn large_logits_stay_finite() {
        let c = ctx(&[&[1.0], &[-1.0]]);
        let p = softmax_probs(&DVector::from_element(1, 800.0), &c).unwrap();
        assert!(p.iter().all(|x| x.is_finite()));
        let l = logistic_loss(&DVector::from_element(1, 800.0), &c, 1).unwrap();
        assert_relative_eq!(l, 1600.0, epsilon = 1e-9);
    }

    #[test]
    fn loss_examples() {
        let two = ctx(&[&[1.0], &[0.0]]);
        assert_relative_eq!(logistic_loss(&DVector::zeros(1), &two, 1).unwrap(), 2f64.ln(), epsilon = 1e-15);
        let five = ctx(&[&[0.1], &[0.2], &[0.3], &[0.4], &[0.5]]);
        for k in 0..5 {
            assert_relative_eq!(logistic_loss(&DVector::zeros(1), &five, k).unwrap(), 5f64.ln(), epsilon = 1e-14);
        }
        let e1 = ctx(&[&[1.0, 0.0], &[0.0, 0.0]]);
        let theta = DVector::from_vec(vec![1.0, 0.0]);
        assert_relative_eq!(logistic_loss(&theta, &e1, 0).unwrap(), 0.31326168751822286, epsilon = 1e-12);
    }

    #[test]
    fn gradient_examples() {
        let single = ctx(&[&[0.3, -0.2]]);
        let g = loss_gradient(&DVector::from_vec(vec![0.7, 0.1]), &single, 0).unwrap();
        assert_eq!(g, DVector::zeros(2));
        let e1 = ctx(&[&[1.0, 0.0], &[0.0, 0.0]]);
        let g = loss_gradient(&DVector::zeros(2), &e1, 0).unwrap();
        assert_relative_eq!(g[0], -0.5, epsilon = 1e-15);
        assert_relative_eq!(g[1], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn hessian_examples() {
        let single = ctx(&[&[0.3, -0.2]]);
        let h = loss_hessian(&DVector::from_vec(vec![0.7, 0.1]), &single).unwrap();
        assert!(h.iter().all(|x| x.abs() < 1e-15));
        let e1 = ctx(&[&[1.0, 0.0], &[0.0, 0.0]]);
        let h = loss_hessian(&DVector::zeros(2), &e1).unwrap();
        assert_relative_eq!(h[(0, 0)], 0.25, epsilon = 1e-15);
        assert_relative_eq!(h[(0, 1)], 0.0, epsilon = 1e-15);
        assert_relative_eq!(h[(1, 1)], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn hessian_matches_textbook_double_sum() {
        let c = ctx(&[&[0.2, -0.5, 0.1], &[0.6, 0.3, -0.2], &[-0.4, 0.1, 0.7]]);
        let theta = DVector::from_vec(vec![0.9, -1.3, 0.4]);
        let p = c.probs(&theta);
        let mut expected = DMatrix::<f64>::zeros(3, 3);
        for i in 0..3 {
            let fi = c.feature(i);
            expected += &fi * fi.transpose() * p[i];
            for j in 0..3 {
                expected -= &fi * c.feature(j).transpose() * (p[i] * p[j]);
            }
        }
        let h = loss_hessian(&theta, &c).unwrap();
        assert!((h - expected).abs().max() < 1e-14);
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        let c = ctx(&[&[1.0], &[0.0]]);
        assert!(softmax_probs(&DVector::from_element(1, f64::NAN), &c).is_err());
        assert!(softmax_probs(&DVector::zeros(2), &c).is_err());
        assert!(logistic_loss(&DVector::zeros(1), &c, 2).is_err());
        assert!(loss_gradient(&DVector::zeros(1), &c, 5).is_err());
        assert!(MnlContext::<f64>::new(DMatrix::zeros(0, 2)).is_err());
    }

    #[test]
    fn kappa_upper_bound_values() {
        assert_relative_eq!(kappa_upper_bound(1, 0.0f64), 1.0);
        assert_relative_eq!(kappa_upper_bound(2, 0.0f64), 4.0);
        assert_relative_eq!(kappa_upper_bound(2, 1.0f64), 4.0 * 1f64.exp().powi(4), epsilon = 1e-10);
        assert_relative_eq!(kappa_upper_bound(2, 1.0f64), 218.392600133, epsilon = 1e-6);
    }

    #[test]
    fn single_precision_calculus_runs() {
        let rows = vec![DVector::from_vec(vec![1.0f32, 0.0]), DVector::from_vec(vec![0.0f32, 0.0])];
        let c = MnlContext::from_rows(&rows).unwrap();
        let h = loss_hessian(&DVector::zeros(2), &c).unwrap();
        assert!((h[(0, 0)] - 0.25).abs() < 1e-6);
        let p = softmax_probs(&DVector::from_vec(vec![2.0f32, 0.0]), &c).unwrap();
        assert!((p.sum() - 1.0).abs() < 1e-6);
    }
}
