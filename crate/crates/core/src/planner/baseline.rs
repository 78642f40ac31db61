use super::optimistic::{backward_induction_with, check_shape, OptimisticTables};
use crate::env::MnlMdp;
use crate::estimator::EstimatorState;
use crate::error::Result;
use crate::linalg;
use crate::scalar::Scalar;

/// `β̃_t = beta_scale·√d·log U·log(tH/δ)`.
pub fn baseline_radius<T: Scalar>(beta_scale: T, d: usize, max_reachable: usize, t: usize, horizon: usize, delta: T) -> T {
    let d_t = T::from_usize(d).unwrap();
    let u = T::from_usize(max_reachable.max(1)).unwrap();
    let th = T::from_usize(t.max(1) * horizon).unwrap();
    beta_scale * d_t.sqrt() * u.ln() * (th / delta).ln().max(T::zero())
}

/// UCRL-MNL-OL planning: plug-in expectation under `θ̂_{t,h}` plus the bonus
/// `β̃_t·H·max_{s'} ‖φ(s'|s,a) − φ̄‖_{𝓗_{t,h}⁻¹}`, with `φ̄` the `p(θ̂)`-mean feature.
pub fn ucrl_mnl_ol_tables<T: Scalar>(
    mdp: &MnlMdp<T>,
    estimator: &EstimatorState<T>,
    t: usize,
    beta_scale: T,
) -> Result<OptimisticTables<T>> {
    check_shape(mdp, estimator)?;
    let hz = mdp.horizon();
    let radius = baseline_radius(
        beta_scale,
        mdp.dim(),
        mdp.feature_map().max_reachable(),
        t,
        hz,
        estimator.config().delta,
    );
    let scale = radius * T::from_usize(hz).unwrap();
    let chols = (0..hz)
        .map(|h| linalg::cholesky(estimator.design(h)))
        .collect::<Result<Vec<_>>>()?;
    backward_induction_with(mdp, |h, _, _, ctx, values| {
        let p = ctx.probs(estimator.theta_hat(h));
        let mean = p.dot(values);
        if scale <= T::zero() {
            return Ok(mean);
        }
        let phi_bar = ctx.matrix().tr_mul(&p);
        let spread = (0..ctx.len())
            .map(|i| linalg::inv_quad_form(&chols[h], &(ctx.feature(i) - &phi_bar)).max(T::zero()).sqrt())
            .fold(T::zero(), |m, x| m.max(x));
        Ok(mean + scale * spread)
    })
}
