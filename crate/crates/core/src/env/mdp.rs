use nalgebra::DVector;
use rand::Rng;

use crate::error::{Error, Result};
use crate::mnl::{FeatureMap, MnlContext};
use crate::scalar::Scalar;

/// A finite-horizon MDP whose stage-`h` kernel is the softmax of
/// `φ(s'|s,a)ᵀθ*_h` over the reachable set.
///
/// Stages are 0-based internally: `h ∈ 0..H`.
#[derive(Debug, Clone, PartialEq)]
pub struct MnlMdp<T: Scalar> {
    feature_map: FeatureMap<T>,
    theta_star: Vec<DVector<T>>,
    rewards: Vec<T>,
    initial_state: usize,
    param_bound: T,
}

impl<T: Scalar> MnlMdp<T> {
    /// `rewards` is flat in `(h, s, a)` order, like the feature map.
    pub fn new(
        feature_map: FeatureMap<T>,
        theta_star: Vec<DVector<T>>,
        rewards: Vec<T>,
        initial_state: usize,
        param_bound: T,
    ) -> Result<Self> {
        let h = feature_map.horizon();
        if theta_star.len() != h {
            return Err(Error::invalid(format!(
                "expected {h} stage parameters, got {}",
                theta_star.len()
            )));
        }
        let slack = param_bound * (T::one() + T::tol(1e-12));
        for (i, th) in theta_star.iter().enumerate() {
            if th.len() != feature_map.dim() {
                return Err(Error::invalid(format!("theta_star[{i}] has wrong dimension")));
            }
            if th.iter().any(|x| !x.is_finite_value()) {
                return Err(Error::invalid(format!("theta_star[{i}] is not finite")));
            }
            if th.norm() > slack {
                return Err(Error::invalid(format!(
                    "theta_star[{i}] has norm {} > B = {}",
                    th.norm().as_f64(),
                    param_bound.as_f64()
                )));
            }
        }
        let n = h * feature_map.num_states() * feature_map.num_actions();
        if rewards.len() != n {
            return Err(Error::invalid(format!("expected {n} rewards, got {}", rewards.len())));
        }
        if rewards.iter().any(|r| !(*r >= T::zero() && *r <= T::one())) {
            return Err(Error::invalid("rewards must lie in [0, 1]"));
        }
        if initial_state >= feature_map.num_states() {
            return Err(Error::invalid("initial state out of range"));
        }
        Ok(Self {
            feature_map,
            theta_star,
            rewards,
            initial_state,
            param_bound,
        })
    }

    pub fn feature_map(&self) -> &FeatureMap<T> {
        &self.feature_map
    }
    pub fn horizon(&self) -> usize {
        self.feature_map.horizon()
    }
    pub fn num_states(&self) -> usize {
        self.feature_map.num_states()
    }
    pub fn num_actions(&self) -> usize {
        self.feature_map.num_actions()
    }
    pub fn dim(&self) -> usize {
        self.feature_map.dim()
    }
    pub fn initial_state(&self) -> usize {
        self.initial_state
    }
    /// Known bound `B ≥ ‖θ*_h‖₂`.
    pub fn param_bound(&self) -> T {
        self.param_bound
    }
    pub fn theta_star(&self) -> &[DVector<T>] {
        &self.theta_star
    }
    pub fn context(&self, h: usize, s: usize, a: usize) -> &MnlContext<T> {
        self.feature_map.context(h, s, a)
    }
    pub fn reachable(&self, h: usize, s: usize, a: usize) -> &[usize] {
        self.feature_map.reachable(h, s, a)
    }
    pub fn reward(&self, h: usize, s: usize, a: usize) -> T {
        self.rewards[self.feature_map.index(h, s, a)]
    }
    pub fn rewards(&self) -> &[T] {
        &self.rewards
    }

    /// True kernel over the reachable set of `(h, s, a)`.
    pub fn transition_probs(&self, h: usize, s: usize, a: usize) -> DVector<T> {
        self.context(h, s, a).probs(&self.theta_star[h])
    }
}

/// Optimal (or any Bellman-style) value tables, 0-based in the stage index.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTables<T> {
    /// `v[h][s]` for `h ∈ 0..=H`, with `v[H] ≡ 0`.
    pub v: Vec<Vec<T>>,
    /// `q[h][s][a]` for `h ∈ 0..H`.
    pub q: Vec<Vec<Vec<T>>>,
    /// Greedy action, lowest index among ties.
    pub policy: Vec<Vec<usize>>,
}

impl<T: Scalar> ValueTables<T> {
    pub fn horizon(&self) -> usize {
        self.q.len()
    }
}

/// Lowest-index argmax.
pub(crate) fn argmax<T: Scalar>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Expectation and variance of `values[reachable]` under `probs`.
pub(crate) fn mean_var<T: Scalar>(probs: &DVector<T>, reachable: &[usize], values: &[T]) -> (T, T) {
    let mean = reachable
        .iter()
        .enumerate()
        .fold(T::zero(), |acc, (i, &s)| acc + probs[i] * values[s]);
    let var = reachable.iter().enumerate().fold(T::zero(), |acc, (i, &s)| {
        let d = values[s] - mean;
        acc + probs[i] * d * d
    });
    (mean, var)
}

/// Backward induction with the true softmax kernel.
pub fn exact_value_iteration<T: Scalar>(mdp: &MnlMdp<T>) -> ValueTables<T> {
    let (hz, ns, na) = (mdp.horizon(), mdp.num_states(), mdp.num_actions());
    let mut v = vec![vec![T::zero(); ns]; hz + 1];
    let mut q = vec![vec![vec![T::zero(); na]; ns]; hz];
    let mut policy = vec![vec![0usize; ns]; hz];
    for h in (0..hz).rev() {
        for s in 0..ns {
            for a in 0..na {
                let p = mdp.transition_probs(h, s, a);
                let (mean, _) = mean_var(&p, mdp.reachable(h, s, a), &v[h + 1]);
                q[h][s][a] = mdp.reward(h, s, a) + mean;
            }
            let best = argmax(&q[h][s]);
            policy[h][s] = best;
            v[h][s] = q[h][s][best];
        }
    }
    ValueTables { v, q, policy }
}

/// Samples `s_{h+1}` from the true kernel; returns it with `r_h(s, a)`.
pub fn step<T: Scalar, R: Rng + ?Sized>(
    mdp: &MnlMdp<T>,
    h: usize,
    s: usize,
    a: usize,
    rng: &mut R,
) -> Result<(usize, T)> {
    mdp.feature_map().check(h, s, a)?;
    let p = mdp.transition_probs(h, s, a);
    let reach = mdp.reachable(h, s, a);
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut next = reach[reach.len() - 1];
    for (i, &sp) in reach.iter().enumerate() {
        acc += p[i].as_f64();
        if u < acc {
            next = sp;
            break;
        }
    }
    Ok((next, mdp.reward(h, s, a)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionRecord<T> {
    pub stage: usize,
    pub state: usize,
    pub action: usize,
    pub reward: T,
    pub next_state: usize,
}

/// One episode: `H` consecutive transitions.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory<T> {
    pub steps: Vec<TransitionRecord<T>>,
}

impl<T: Scalar> Trajectory<T> {
    pub fn total_reward(&self) -> T {
        self.steps.iter().fold(T::zero(), |acc, r| acc + r.reward)
    }
}

/// Rolls out one episode from the initial state with a deterministic policy.
pub fn rollout<T, R, P>(mdp: &MnlMdp<T>, mut policy: P, rng: &mut R) -> Result<Trajectory<T>>
where
    T: Scalar,
    R: Rng + ?Sized,
    P: FnMut(usize, usize) -> usize,
{
    let mut s = mdp.initial_state();
    let mut steps = Vec::with_capacity(mdp.horizon());
    for h in 0..mdp.horizon() {
        let a = policy(h, s);
        let (next, reward) = step(mdp, h, s, a, rng)?;
        steps.push(TransitionRecord {
            stage: h,
            state: s,
            action: a,
            reward,
            next_state: next,
        });
        s = next;
    }
    Ok(Trajectory { steps })
}

/// `H⁻² Var_{p*}[V*_{h+1}(s') | s, π*_h(s)]`.
fn normalized_optimal_variance<T: Scalar>(mdp: &MnlMdp<T>, tables: &ValueTables<T>, h: usize, s: usize) -> T {
    let a = tables.policy[h][s];
    let p = mdp.transition_probs(h, s, a);
    let (_, var) = mean_var(&p, mdp.reachable(h, s, a), &tables.v[h + 1]);
    let hz = T::from_usize(mdp.horizon()).unwrap();
    var / (hz * hz)
}

/// `σ̄_T` along the visited states, with the variance taken under the
/// optimal action at each visited state (not the played one).
pub fn sigma_bar_on_trajectory<T: Scalar>(
    mdp: &MnlMdp<T>,
    tables: &ValueTables<T>,
    trajectories: &[Trajectory<T>],
) -> Result<T> {
    if tables.horizon() != mdp.horizon() || tables.v.len() != mdp.horizon() + 1 {
        return Err(Error::invalid("value tables do not match the MDP horizon"));
    }
    if trajectories.is_empty() {
        return Err(Error::invalid("no trajectories"));
    }
    let mut total = T::zero();
    let mut count = 0usize;
    for traj in trajectories {
        if traj.steps.len() != mdp.horizon() {
            return Err(Error::invalid(format!(
                "trajectory of length {} for horizon {}",
                traj.steps.len(),
                mdp.horizon()
            )));
        }
        for rec in &traj.steps {
            if rec.state >= mdp.num_states() || rec.stage >= mdp.horizon() {
                return Err(Error::invalid("trajectory references unknown state or stage"));
            }
            total += normalized_optimal_variance(mdp, tables, rec.stage, rec.state);
            count += 1;
        }
    }
    Ok((total / T::from_usize(count).unwrap()).sqrt())
}

/// Monte-Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarloEstimate<T> {
    pub mean: T,
    pub std_error: T,
    pub samples: usize,
}

/// Estimates `E_{π*}[σ̄²]` from `num_rollouts` episodes played by `π*`.
pub fn sigma_bar_under_optimal_policy<T: Scalar, R: Rng + ?Sized>(
    mdp: &MnlMdp<T>,
    tables: &ValueTables<T>,
    num_rollouts: usize,
    rng: &mut R,
) -> Result<MonteCarloEstimate<T>> {
    if num_rollouts == 0 {
        return Err(Error::invalid("num_rollouts must be at least 1"));
    }
    let hz = T::from_usize(mdp.horizon()).unwrap();
    let mut values = Vec::with_capacity(num_rollouts);
    for _ in 0..num_rollouts {
        let traj = rollout(mdp, |h, s| tables.policy[h][s], rng)?;
        let sum = traj.steps.iter().fold(T::zero(), |acc, rec| {
            acc + normalized_optimal_variance(mdp, tables, rec.stage, rec.state)
        });
        values.push(sum / hz);
    }
    let n = T::from_usize(num_rollouts).unwrap();
    let mean = values.iter().fold(T::zero(), |a, b| a + *b) / n;
    let std_error = if num_rollouts > 1 {
        let ss = values.iter().fold(T::zero(), |a, b| a + (*b - mean) * (*b - mean));
        (ss / (n - T::one()) / n).sqrt()
    } else {
        T::zero()
    };
    Ok(MonteCarloEstimate {
        mean,
        std_error,
        samples: num_rollouts,
    })
}
