use nalgebra::DVector;

use super::fw::{fw_inner_max, FwConfig};
use crate::env::MnlMdp;
use crate::estimator::EstimatorState;
use crate::error::{Error, Result};
use crate::mnl::MnlContext;
use crate::scalar::Scalar;

/// Optimistic value tables for one episode, 0-based in the stage index.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimisticTables<T> {
    /// `v[h][s]` for `h ∈ 0..=H`, `v[H] ≡ 0`, clipped to `[0, H]`.
    pub v: Vec<Vec<T>>,
    /// `q[h][s][a]`, clipped to `[0, H]`.
    pub q: Vec<Vec<Vec<T>>>,
}

impl<T: Scalar> OptimisticTables<T> {
    pub fn horizon(&self) -> usize {
        self.q.len()
    }
}

/// Lowest-index maximiser of `q[h][s][·]`.
pub fn act<T: Scalar>(tables: &OptimisticTables<T>, h: usize, s: usize) -> usize {
    crate::env::argmax(&tables.q[h][s])
}

/// Backward induction `Q(s,a) = r_h(s,a) + inner(h, s, a, ctx, Ṽ_{h+1}|reachable)`,
/// `Ṽ_h(s) = max_a Q(s,a)`, both clipped to `[0, H]`.
pub fn backward_induction_with<T, F>(mdp: &MnlMdp<T>, mut inner: F) -> Result<OptimisticTables<T>>
where
    T: Scalar,
    F: FnMut(usize, usize, usize, &MnlContext<T>, &DVector<T>) -> Result<T>,
{
    let (hz, ns, na) = (mdp.horizon(), mdp.num_states(), mdp.num_actions());
    let cap = T::from_usize(hz).unwrap();
    let mut v = vec![vec![T::zero(); ns]; hz + 1];
    let mut q = vec![vec![vec![T::zero(); na]; ns]; hz];
    for h in (0..hz).rev() {
        for s in 0..ns {
            for a in 0..na {
                let reach = mdp.reachable(h, s, a);
                let values = DVector::from_iterator(reach.len(), reach.iter().map(|&n| v[h + 1][n]));
                let cont = inner(h, s, a, mdp.context(h, s, a), &values)?;
                if !cont.is_finite_value() {
                    return Err(Error::numerical(
                        "backward_induction",
                        format!("non-finite continuation value at stage {h}, state {s}, action {a}"),
                    ));
                }
                q[h][s][a] = (mdp.reward(h, s, a) + cont).max(T::zero()).min(cap);
            }
            v[h][s] = q[h][s].iter().copied().fold(T::zero(), |m, x| m.max(x));
        }
    }
    Ok(OptimisticTables { v, q })
}

/// LIVAROT planning for episode `t`: the inner maximum over `C_{t,h}(δ)` is
/// solved by Frank-Wolfe.
pub fn optimistic_backward_induction<T: Scalar>(
    mdp: &MnlMdp<T>,
    estimator: &EstimatorState<T>,
    t: usize,
    cfg: &FwConfig,
) -> Result<OptimisticTables<T>> {
    check_shape(mdp, estimator)?;
    let sets = (0..mdp.horizon())
        .map(|h| estimator.confidence_set(h, t))
        .collect::<Result<Vec<_>>>()?;
    backward_induction_with(mdp, |h, _, _, ctx, values| {
        Ok(fw_inner_max(&sets[h], ctx, values, cfg)?.objective)
    })
}

pub(crate) fn check_shape<T: Scalar>(mdp: &MnlMdp<T>, estimator: &EstimatorState<T>) -> Result<()> {
    if mdp.dim() != estimator.dim() || mdp.horizon() != estimator.horizon() {
        return Err(Error::invalid("estimator does not match the instance shape"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{exact_value_iteration, random_tabular_instance};
    use crate::estimator::{EstimatorConfig, EstimatorState};
    use nalgebra::DMatrix;

    fn estimator(mdp: &MnlMdp<f64>, beta_scale: f64) -> EstimatorState<f64> {
        let d = mdp.dim();
        let cfg = EstimatorConfig {
            lambda: 1.0,
            delta: 0.1,
            param_bound: 1.0,
            eta_omd: 1.0,
            beta_scale,
        };
        EstimatorState::from_parts(
            cfg,
            mdp.theta_star().to_vec(),
            vec![DMatrix::identity(d, d); mdp.horizon()],
            None,
        )
        .unwrap()
    }

    #[test]
    fn degenerate_set_reproduces_dp() {
        let mdp = random_tabular_instance::<f64>(4, 3, 3, 4, 1.0, 2).unwrap();
        let tables = optimistic_backward_induction(&mdp, &estimator(&mdp, 0.0), 10, &FwConfig::default()).unwrap();
        let exact = exact_value_iteration(&mdp);
        for h in 0..=mdp.horizon() {
            for s in 0..mdp.num_states() {
                assert!((tables.v[h][s] - exact.v[h][s]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn values_stay_in_range_and_dominate_dp() {
        let mdp = random_tabular_instance::<f64>(4, 2, 2, 5, 1.0, 8).unwrap();
        let tables = optimistic_backward_induction(&mdp, &estimator(&mdp, 1.0), 10, &FwConfig::default()).unwrap();
        let exact = exact_value_iteration(&mdp);
        let hz = mdp.horizon() as f64;
        for h in 0..mdp.horizon() {
            for s in 0..mdp.num_states() {
                assert!(tables.v[h][s] >= exact.v[h][s] - 1e-9);
                assert!((0.0..=hz).contains(&tables.v[h][s]));
                let a = act(&tables, h, s);
                assert_eq!(tables.v[h][s], tables.q[h][s][a]);
            }
        }
        assert!(tables.v[mdp.horizon()].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_rewards_give_zero_values() {
        let mdp = random_tabular_instance::<f64>(3, 2, 2, 3, 1.0, 4).unwrap();
        let fm = mdp.feature_map().clone();
        let zero = MnlMdp::new(fm, mdp.theta_star().to_vec(), vec![0.0; mdp.rewards().len()], 0, 1.0).unwrap();
        let tables = optimistic_backward_induction(&zero, &estimator(&zero, 1.0), 5, &FwConfig::default()).unwrap();
        assert!(tables.v.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn ties_pick_lowest_action() {
        let tables = OptimisticTables {
            v: vec![vec![1.0], vec![0.0]],
            q: vec![vec![vec![0.5, 1.0, 1.0]]],
        };
        assert_eq!(act(&tables, 0, 0), 1);
    }
}
