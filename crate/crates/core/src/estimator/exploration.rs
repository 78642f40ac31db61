use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::ellipsoid::Ellipsoid;
use super::radius::exploration_radius_sq;
use crate::env::{step, MnlMdp, Trajectory, TransitionRecord};
use crate::error::{Error, Result};
use crate::linalg;
use crate::mnl::ModelConstants;
use crate::scalar::Scalar;

const NEWTON_MAX_ITERS: usize = 200;
const ARMIJO: f64 = 1e-4;

/// An observed transition during exploration; `outcome` indexes the
/// reachable set of `(h, state, action)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExplorationRecord {
    pub state: usize,
    pub action: usize,
    pub outcome: usize,
}

/// A virtual design point `(s̃, a, s̃')` picked by the exploration rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VirtualRecord<T> {
    pub state: usize,
    pub action: usize,
    pub outcome: usize,
    /// `‖φ̃‖_{Ũ_{t+1}⁻¹}`, the loss weight in the penalised MLE.
    pub weight: T,
    /// `‖φ̃‖²_{Ũ_t⁻¹}` at selection time.
    pub potential: T,
}

/// Running state of the forced-exploration phase.
#[derive(Debug, Clone)]
pub struct ExplorationState<T: Scalar> {
    dim: usize,
    horizon: usize,
    constants: ModelConstants<T>,
    lambda0: T,
    tau: usize,
    episodes: usize,
    u_tilde: Vec<DMatrix<T>>,
    real: Vec<Vec<ExplorationRecord>>,
    virtuals: Vec<Vec<VirtualRecord<T>>>,
}

impl<T: Scalar> ExplorationState<T> {
    /// Fresh state with `Ũ_{1,h} = I` for every stage.
    pub fn new(mdp: &MnlMdp<T>, constants: ModelConstants<T>, lambda0: T, tau: usize) -> Result<Self> {
        if !(constants.kappa > T::zero()) || !(constants.rho > T::zero()) {
            return Err(Error::invalid("kappa and rho must be positive"));
        }
        if !(lambda0 >= T::zero()) {
            return Err(Error::invalid("lambda0 must be non-negative"));
        }
        let (d, hz) = (mdp.dim(), mdp.horizon());
        Ok(Self {
            dim: d,
            horizon: hz,
            constants,
            lambda0,
            tau,
            episodes: 0,
            u_tilde: vec![DMatrix::identity(d, d); hz],
            real: vec![Vec::new(); hz],
            virtuals: vec![Vec::new(); hz],
        })
    }

    pub fn episodes(&self) -> usize {
        self.episodes
    }
    pub fn tau(&self) -> usize {
        self.tau
    }
    pub fn constants(&self) -> &ModelConstants<T> {
        &self.constants
    }
    pub fn u_tilde(&self, h: usize) -> &DMatrix<T> {
        &self.u_tilde[h]
    }
    pub fn real_records(&self, h: usize) -> &[ExplorationRecord] {
        &self.real[h]
    }
    pub fn virtual_records(&self, h: usize) -> &[VirtualRecord<T>] {
        &self.virtuals[h]
    }

    /// Global maximiser of `‖φ(s'|s,a)‖²_{Ũ_h⁻¹}` over `(a, s, s')`, lowest
    /// index first among ties. Returns `(a, s, outcome index, value)`.
    pub fn select_design(&self, mdp: &MnlMdp<T>, h: usize) -> Result<(usize, usize, usize, T)> {
        let chol = linalg::cholesky(&self.u_tilde[h])?;
        let mut best: Option<(usize, usize, usize, T)> = None;
        for a in 0..mdp.num_actions() {
            for s in 0..mdp.num_states() {
                let ctx = mdp.context(h, s, a);
                for i in 0..ctx.len() {
                    let v = linalg::inv_quad_form(&chol, &ctx.feature(i));
                    if best.is_none_or(|b| v > b.3) {
                        best = Some((a, s, i, v));
                    }
                }
            }
        }
        best.ok_or_else(|| Error::invalid("instance has no transitions"))
    }

    /// Plays one exploration episode from the instance's initial state.
    ///
    /// At every stage the action of the design maximiser is played from the
    /// state actually occupied; the maximiser's `(s̃, s̃')` is logged as a
    /// virtual design point. After the episode, `Ũ_h += (ρ/κ)·φ̃φ̃ᵀ`.
    pub fn exploration_episode<R: Rng + ?Sized>(&mut self, mdp: &MnlMdp<T>, rng: &mut R) -> Result<Trajectory<T>> {
        if self.episodes >= self.tau {
            return Err(Error::invalid(format!(
                "exploration already ran its {} episodes",
                self.tau
            )));
        }
        if mdp.dim() != self.dim || mdp.horizon() != self.horizon {
            return Err(Error::invalid("instance does not match exploration state"));
        }
        let mut s = mdp.initial_state();
        let mut traj = Trajectory { steps: Vec::with_capacity(self.horizon) };
        let mut picks = Vec::with_capacity(self.horizon);
        for h in 0..self.horizon {
            let pick = self.select_design(mdp, h)?;
            let a = pick.0;
            let (next, reward) = step(mdp, h, s, a, rng)?;
            let outcome = mdp
                .feature_map()
                .outcome_index(h, s, a, next)
                .expect("sampled state is reachable");
            self.real[h].push(ExplorationRecord { state: s, action: a, outcome });
            traj.steps.push(TransitionRecord {
                stage: h,
                state: s,
                action: a,
                reward,
                next_state: next,
            });
            picks.push(pick);
            s = next;
        }
        let w = self.constants.rho / self.constants.kappa;
        for (h, (a, vs, vo, potential)) in picks.into_iter().enumerate() {
            let phi = mdp.context(h, vs, a).feature(vo);
            linalg::add_outer(&mut self.u_tilde[h], &phi, w);
            let chol = linalg::cholesky(&self.u_tilde[h])?;
            let weight = linalg::inv_quad_form(&chol, &phi).max(T::zero()).sqrt();
            self.virtuals[h].push(VirtualRecord {
                state: vs,
                action: a,
                outcome: vo,
                weight,
                potential,
            });
        }
        self.episodes += 1;
        Ok(traj)
    }

    /// Penalised objective `L̃_h(θ)`: real-transition losses, the
    /// `(λ₀+1)/2·‖θ‖²` ridge and the weighted virtual losses.
    pub fn objective(&self, mdp: &MnlMdp<T>, h: usize, theta: &DVector<T>) -> T {
        let ridge = (self.lambda0 + T::one()) * T::lit(0.5) * theta.norm_squared();
        let real = self.real[h].iter().fold(T::zero(), |acc, r| {
            acc - mdp.context(h, r.state, r.action).log_probs(theta)[r.outcome]
        });
        let virt = self.virtuals[h].iter().fold(T::zero(), |acc, v| {
            acc - v.weight * mdp.context(h, v.state, v.action).log_probs(theta)[v.outcome]
        });
        ridge + real + virt
    }

    fn gradient_hessian(&self, mdp: &MnlMdp<T>, h: usize, theta: &DVector<T>) -> (DVector<T>, DMatrix<T>) {
        let ridge = self.lambda0 + T::one();
        let mut g = theta * ridge;
        let mut hess = DMatrix::<T>::identity(self.dim, self.dim) * ridge;
        for r in &self.real[h] {
            let ctx = mdp.context(h, r.state, r.action);
            g += ctx.gradient_unchecked(theta, r.outcome);
            hess += ctx.hessian_unchecked(theta);
        }
        for v in &self.virtuals[h] {
            let ctx = mdp.context(h, v.state, v.action);
            g += ctx.gradient_unchecked(theta, v.outcome) * v.weight;
            hess += ctx.hessian_unchecked(theta) * v.weight;
        }
        (g, hess)
    }

    /// Minimiser of [`Self::objective`] for one stage, by damped Newton from 0.
    pub fn stage_mle(&self, mdp: &MnlMdp<T>, h: usize) -> Result<DVector<T>> {
        let tol = T::tol(1e-8);
        let mut theta = DVector::<T>::zeros(self.dim);
        let mut value = self.objective(mdp, h, &theta);
        let mut grad_norm = T::zero();
        for _ in 0..NEWTON_MAX_ITERS {
            let (g, hess) = self.gradient_hessian(mdp, h, &theta);
            grad_norm = g.norm();
            if grad_norm <= tol {
                return Ok(theta);
            }
            let dir = -linalg::cholesky(&hess)?.solve(&g);
            let slope = g.dot(&dir);
            if -slope <= T::lit(1e-13) * value.abs().max(T::one()) {
                // Predicted decrease is below the resolution of the objective.
                theta += dir;
                value = self.objective(mdp, h, &theta);
                continue;
            }
            let mut step = T::one();
            let mut moved = false;
            for _ in 0..60 {
                let cand = &theta + &dir * step;
                let cand_value = self.objective(mdp, h, &cand);
                if cand_value <= value + T::lit(ARMIJO) * step * slope {
                    theta = cand;
                    value = cand_value;
                    moved = true;
                    break;
                }
                step *= T::lit(0.5);
            }
            if !moved {
                // Round-off floor: take the full Newton step and let the gradient test decide.
                theta += dir;
                value = self.objective(mdp, h, &theta);
            }
        }
        let (g, _) = self.gradient_hessian(mdp, h, &theta);
        grad_norm = grad_norm.min(g.norm());
        if grad_norm <= tol {
            return Ok(theta);
        }
        Err(Error::numerical(
            "exploration_mle",
            format!(
                "Newton did not converge in {NEWTON_MAX_ITERS} iterations at stage {h}; gradient norm {:e}",
                grad_norm.as_f64()
            ),
        ))
    }

    /// Per-stage penalised MLE `θ̂_{τ+1,h}`.
    pub fn mle(&self, mdp: &MnlMdp<T>) -> Result<Vec<DVector<T>>> {
        (0..self.horizon).map(|h| self.stage_mle(mdp, h)).collect()
    }

    /// `A_{τ+1,h} = (1/κ)Σ_t Σ_{s'} φφᵀ + (ρ/κ)Σ_t φ̃φ̃ᵀ + I`.
    pub fn design_matrix(&self, mdp: &MnlMdp<T>, h: usize) -> DMatrix<T> {
        let inv_kappa = T::one() / self.constants.kappa;
        let w = self.constants.rho * inv_kappa;
        let mut a = DMatrix::<T>::identity(self.dim, self.dim);
        for r in &self.real[h] {
            let m = mdp.context(h, r.state, r.action).matrix();
            a += m.tr_mul(m) * inv_kappa;
        }
        for v in &self.virtuals[h] {
            let phi = mdp.context(h, v.state, v.action).feature(v.outcome);
            linalg::add_outer(&mut a, &phi, w);
        }
        a
    }

    /// Confidence sets `Θ_h = {θ : ‖θ − θ̂_h‖²_{A_h} ≤ β⁰_{τ+1}(δ)}`, with `τ`
    /// the number of exploration episodes played.
    pub fn confidence_sets(&self, mdp: &MnlMdp<T>, theta_hats: &[DVector<T>], delta: T) -> Result<Vec<Ellipsoid<T>>> {
        if theta_hats.len() != self.horizon {
            return Err(Error::invalid("need one estimate per stage"));
        }
        let beta_sq = exploration_radius_sq(
            self.episodes,
            self.constants.b,
            self.dim,
            self.horizon,
            delta,
            self.constants.kappa,
            self.constants.rho,
        );
        let radius = beta_sq.sqrt();
        (0..self.horizon)
            .map(|h| Ellipsoid::new(theta_hats[h].clone(), self.design_matrix(mdp, h), radius))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{episode_rng, random_tabular_instance};
    use crate::mnl::{FeatureMap, MnlContext};
    use approx::assert_relative_eq;

    /// One stage, two states, two actions; every context reaches both states.
    fn two_state(rows: [[f64; 2]; 8], theta: [f64; 2]) -> MnlMdp<f64> {
        let contexts = (0..4)
            .map(|i| MnlContext::new(DMatrix::from_row_slice(2, 2, &[rows[2 * i][0], rows[2 * i][1], rows[2 * i + 1][0], rows[2 * i + 1][1]])).unwrap())
            .collect();
        let fm = FeatureMap::new(2, 1, 2, 2, 1.0, contexts, vec![vec![0, 1]; 4]).unwrap();
        MnlMdp::new(fm, vec![DVector::from_row_slice(&theta)], vec![0.5; 4], 0, 1.0).unwrap()
    }

    fn unit_constants() -> ModelConstants<f64> {
        ModelConstants {
            kappa: 1.0,
            rho: 1.0,
            b: 1.0,
        }
    }

    #[test]
    fn first_pick_is_largest_feature_lowest_index() {
        // (h, s, a) order is s-major; the largest norm appears at (s=1, a=0)
        // outcome 1 and again at (s=1, a=1) outcome 0.
        let mut rows = [[0.1, 0.0]; 8];
        rows[5] = [0.0, 1.0];
        rows[6] = [1.0, 0.0];
        let mdp = two_state(rows, [0.0, 0.0]);
        let st = ExplorationState::new(&mdp, unit_constants(), 1.0, 3).unwrap();
        let (a, s, o, v) = st.select_design(&mdp, 0).unwrap();
        assert_eq!((a, s, o), (0, 1, 1));
        assert_relative_eq!(v, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn potential_halves_after_unit_update() {
        let mut rows = [[0.1, 0.0]; 8];
        rows[0] = [1.0, 0.0];
        let mdp = two_state(rows, [0.0, 0.0]);
        let mut st = ExplorationState::new(&mdp, unit_constants(), 1.0, 3).unwrap();
        st.exploration_episode(&mdp, &mut episode_rng(0, 1)).unwrap();
        let chol = linalg::cholesky(st.u_tilde(0)).unwrap();
        let e1 = DVector::from_row_slice(&[1.0, 0.0]);
        assert_relative_eq!(linalg::inv_quad_form(&chol, &e1), 0.5, epsilon = 1e-14);
        let rec = st.virtual_records(0)[0];
        assert_relative_eq!(rec.potential, 1.0, epsilon = 1e-14);
        assert_relative_eq!(rec.weight, 0.5f64.sqrt(), epsilon = 1e-14);
    }

    #[test]
    fn elliptical_potential_and_determinant() {
        let mdp = random_tabular_instance::<f64>(3, 2, 3, 2, 1.0, 11).unwrap();
        let constants = ModelConstants {
            kappa: 4.0,
            rho: 0.8,
            b: 1.0,
        };
        let tau = 60;
        let mut st = ExplorationState::new(&mdp, constants, 1.0, tau).unwrap();
        let mut prev_det = [1.0; 2];
        for t in 0..tau {
            st.exploration_episode(&mdp, &mut episode_rng(3, t as u64)).unwrap();
            for (h, prev) in prev_det.iter_mut().enumerate() {
                let det = st.u_tilde(h).determinant();
                assert!(det >= *prev - 1e-12);
                *prev = det;
            }
        }
        assert!(st.exploration_episode(&mdp, &mut episode_rng(3, 99)).is_err());
        let bound = 4.0 / 0.8 * 2.0 * 3.0 * (1.0 + tau as f64 / 3.0).ln();
        for h in 0..2 {
            let total: f64 = st.virtual_records(h).iter().map(|v| v.potential).sum();
            assert!(total <= bound, "stage {h}: {total} > {bound}");
        }
    }

    #[test]
    fn mle_without_data_is_zero() {
        let mdp = random_tabular_instance::<f64>(3, 2, 2, 2, 1.0, 1).unwrap();
        let st = ExplorationState::new(&mdp, unit_constants(), 1.0, 0).unwrap();
        for th in st.mle(&mdp).unwrap() {
            assert_eq!(th.norm(), 0.0);
        }
        let sets = st.confidence_sets(&mdp, &st.mle(&mdp).unwrap(), 0.1).unwrap();
        assert_eq!(sets[0].shape(), &DMatrix::identity(2, 2));
    }

    #[test]
    fn mle_is_stationary_and_beats_truth() {
        let mdp = random_tabular_instance::<f64>(4, 2, 3, 2, 1.0, 5).unwrap();
        let mut st = ExplorationState::new(&mdp, unit_constants(), 1.0, 40).unwrap();
        for t in 0..40 {
            st.exploration_episode(&mdp, &mut episode_rng(9, t)).unwrap();
        }
        let hats = st.mle(&mdp).unwrap();
        for h in 0..2 {
            let (g, _) = st.gradient_hessian(&mdp, h, &hats[h]);
            assert!(g.norm() <= 1e-8);
            assert!(st.objective(&mdp, h, &hats[h]) <= st.objective(&mdp, h, &mdp.theta_star()[h]));
        }
    }

    #[test]
    fn heavy_ridge_shrinks_estimate() {
        let rows = [[1.0, 0.0], [-1.0, 0.0], [0.0, 0.5], [0.0, -0.5], [0.5, 0.5], [0.0, 0.0], [0.3, 0.0], [0.0, 0.3]];
        let mdp = two_state(rows, [0.8, -0.2]);
        let lambda0 = 1e4;
        let mut st = ExplorationState::new(&mdp, unit_constants(), lambda0, 1).unwrap();
        st.exploration_episode(&mdp, &mut episode_rng(1, 1)).unwrap();
        let (g0, _) = st.gradient_hessian(&mdp, 0, &DVector::zeros(2));
        let hat = st.stage_mle(&mdp, 0).unwrap();
        assert!(hat.norm() <= g0.norm() / lambda0);
    }
}
