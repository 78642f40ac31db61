//! Instance generators: the lower-bound chain, KL-constrained robust MDPs in
//! MNL form, and random tabular fixtures.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::mdp::{exact_value_iteration, MnlMdp};
use super::rng::instance_rng;
use crate::error::{Error, Result};
use crate::mnl::{FeatureMap, MnlContext};
use crate::scalar::Scalar;

/// Derived constants of the chain instance for given `(d, H, T)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HardInstanceParams {
    /// `δ = 1/H`.
    pub delta: f64,
    /// `Δ = 1/(4√(2HT))`.
    pub gap: f64,
    /// Per-coordinate magnitude `Δ̄` of the action-facing parameter.
    pub bar_delta: f64,
    /// Absorption probability under the best action, `δ + (d−1)Δ`.
    pub p_star: f64,
}

pub fn hard_instance_params(d: usize, horizon: usize, episodes: usize) -> Result<HardInstanceParams> {
    if d < 2 {
        return Err(Error::invalid("hard instance requires d >= 2"));
    }
    if d > 21 {
        return Err(Error::invalid("hard instance requires d <= 21 (2^(d-1) actions)"));
    }
    if horizon < 3 {
        return Err(Error::invalid("hard instance requires H >= 3"));
    }
    if episodes == 0 {
        return Err(Error::invalid("hard instance requires T >= 1"));
    }
    let delta = 1.0 / horizon as f64;
    let gap = 1.0 / (4.0 * (2.0 * horizon as f64 * episodes as f64).sqrt());
    let k = (d - 1) as f64;
    let p_star = delta + k * gap;
    if 1.0 - p_star <= 0.0 {
        return Err(Error::invalid(format!(
            "hard instance requires 1 - delta - (d-1)*Delta > 0, got {}",
            1.0 - p_star
        )));
    }
    let bar_delta = ((1.0 - delta) * p_star / (delta * (1.0 - p_star))).ln() / k;
    Ok(HardInstanceParams {
        delta,
        gap,
        bar_delta,
        p_star,
    })
}

/// Action `k` of `{−1, 1}^{d−1}`: bit `j` set means coordinate `j` is `+1`.
fn sign_action(k: usize, len: usize) -> Vec<f64> {
    (0..len).map(|j| if (k >> j) & 1 == 1 { 1.0 } else { -1.0 }).collect()
}

/// The `H + 2`-state chain with an absorbing rewarding state.
///
/// State `i < H` (that is `s_{i+1}`) moves to `i + 1` or to the absorbing
/// state `H + 1` (`s_{H+2}`), the latter with probability
/// `1/(1 + (H−1)·exp(−θᵀa))`. State `H` (`s_{H+1}`) is absorbing with reward
/// 0; state `H + 1` is absorbing with reward 1 at every stage.
///
/// The model dimension is `d`: `d − 1` action-facing coordinates plus one
/// bias coordinate carrying the `log(H−1)` offset. With
/// `per_stage_resample` the sign pattern of `θ*_h` is drawn independently
/// for each stage, otherwise one pattern is shared by all stages.
pub fn hard_instance<T: Scalar>(
    d: usize,
    horizon: usize,
    episodes: usize,
    seed: u64,
    per_stage_resample: bool,
) -> Result<MnlMdp<T>> {
    let params = hard_instance_params(d, horizon, episodes)?;
    let k = d - 1;
    let num_actions = 1usize << k;
    let num_states = horizon + 2;
    let chain_end = horizon;
    let absorbing = horizon + 1;
    let scale = std::f64::consts::FRAC_1_SQRT_2;

    let mut rng = instance_rng(seed);
    let mut draw_core = || -> Vec<f64> {
        (0..k)
            .map(|_| if rng.random::<bool>() { params.bar_delta } else { -params.bar_delta })
            .collect()
    };
    let shared = draw_core();
    let bias = ((horizon - 1) as f64).ln() / scale;
    let theta_star: Vec<DVector<T>> = (0..horizon)
        .map(|h| {
            let core = if per_stage_resample && h > 0 { draw_core() } else { shared.clone() };
            let mut th: Vec<f64> = core.iter().map(|c| c * (k as f64).sqrt() / scale).collect();
            th.push(bias);
            DVector::from_iterator(d, th.into_iter().map(T::lit))
        })
        .collect();

    let mut contexts = Vec::with_capacity(horizon * num_states * num_actions);
    let mut reachable = Vec::with_capacity(contexts.capacity());
    let mut rewards = Vec::with_capacity(contexts.capacity());
    for _h in 0..horizon {
        for s in 0..num_states {
            for a in 0..num_actions {
                if s < chain_end {
                    let act = sign_action(a, k);
                    let mut to_next: Vec<f64> =
                        act.iter().map(|x| -x / (k as f64).sqrt() * scale).collect();
                    to_next.push(scale);
                    let rows = DMatrix::from_fn(2, d, |i, j| if i == 0 { T::lit(to_next[j]) } else { T::zero() });
                    contexts.push(MnlContext::new(rows)?);
                    reachable.push(vec![s + 1, absorbing]);
                } else {
                    contexts.push(MnlContext::new(DMatrix::zeros(1, d))?);
                    reachable.push(vec![s]);
                }
                rewards.push(if s == absorbing { T::one() } else { T::zero() });
            }
        }
    }
    let fm = FeatureMap::new(d, horizon, num_states, num_actions, T::one(), contexts, reachable)?;
    let b = theta_star.iter().map(|t| t.norm()).fold(T::one(), |a, x| a.max(x));
    MnlMdp::new(fm, theta_star, rewards, 0, b)
}

/// Inputs of a KL-constrained robust MDP written in MNL form.
///
/// The worst-case kernel is `p*_h(s'|s,a) ∝ p₀(s'|s,a)·exp(−η·α_{h+1}ᵀψ(s'))`,
/// realised with `φ(s'|s,a) = (log p₀(s'|s,a); ψ(s'))` and
/// `θ*_h = (1; −η·α_{h+1})`. `nominal` holds `p₀` over each reachable set,
/// up to normalisation, and `alpha[h]` represents `V*_{h+1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct KlRobustSpec<T: Scalar> {
    pub num_states: usize,
    pub num_actions: usize,
    pub horizon: usize,
    /// Flat `(h, s, a)` reachable sets.
    pub reachable: Vec<Vec<usize>>,
    /// Flat `(h, s, a)` nominal weights aligned with `reachable`.
    pub nominal: Vec<Vec<T>>,
    /// `ψ(s')` per state, dimension `d − 1`.
    pub psi: Vec<DVector<T>>,
    /// `α_{h+1}` for `h ∈ 0..H`.
    pub alpha: Vec<DVector<T>>,
    pub eta: T,
    /// Flat `(h, s, a)` rewards.
    pub rewards: Vec<T>,
    pub initial_state: usize,
}

/// Builds the MNL instance of a KL-constrained robust MDP.
///
/// Requires `|log p₀| ≤ 1` and `‖ψ‖₂ ≤ 1`, so features are bounded by `√2`
/// (recorded as the feature map's norm bound). The stored parameter bound
/// is `B = max_h √(1 + η²‖α_{h+1}‖₂²)`.
pub fn kl_robust_instance<T: Scalar>(spec: &KlRobustSpec<T>) -> Result<MnlMdp<T>> {
    let (ns, na, hz) = (spec.num_states, spec.num_actions, spec.horizon);
    let n = hz * ns * na;
    if spec.reachable.len() != n || spec.nominal.len() != n {
        return Err(Error::invalid(format!("expected {n} reachable sets and nominal rows")));
    }
    if spec.psi.len() != ns {
        return Err(Error::invalid("psi must have one entry per state"));
    }
    if spec.alpha.len() != hz {
        return Err(Error::invalid("alpha must have one entry per stage"));
    }
    if !(spec.eta >= T::zero()) || !spec.eta.is_finite_value() {
        return Err(Error::invalid("eta must be finite and non-negative"));
    }
    let psi_dim = spec.psi.first().map(|p| p.len()).unwrap_or(0);
    let slack = T::one() + T::tol(1e-12);
    for p in &spec.psi {
        if p.len() != psi_dim {
            return Err(Error::invalid("psi vectors have mismatched dimension"));
        }
        if p.norm() > slack {
            return Err(Error::invalid("psi(s') must satisfy ||psi||_2 <= 1"));
        }
    }
    if spec.alpha.iter().any(|a| a.len() != psi_dim) {
        return Err(Error::invalid("alpha and psi dimensions differ"));
    }
    let d = psi_dim + 1;
    let mut contexts = Vec::with_capacity(n);
    for (i, (reach, w)) in spec.reachable.iter().zip(&spec.nominal).enumerate() {
        if reach.len() != w.len() {
            return Err(Error::invalid(format!("context {i}: nominal row length mismatch")));
        }
        let mut rows = DMatrix::<T>::zeros(reach.len(), d);
        for (r, (&sp, &weight)) in reach.iter().zip(w).enumerate() {
            if sp >= ns {
                return Err(Error::invalid(format!("context {i}: reachable state out of range")));
            }
            if !(weight > T::zero()) {
                return Err(Error::invalid(format!("context {i}: nominal weights must be positive")));
            }
            let lw = weight.ln();
            if lw.abs() > slack {
                return Err(Error::invalid(format!(
                    "context {i}: |log p0| = {} exceeds 1",
                    lw.abs().as_f64()
                )));
            }
            rows[(r, 0)] = lw;
            for j in 0..psi_dim {
                rows[(r, j + 1)] = spec.psi[sp][j];
            }
        }
        contexts.push(MnlContext::new(rows)?);
    }
    let fm = FeatureMap::new(d, hz, ns, na, T::lit(2.0).sqrt(), contexts, spec.reachable.clone())?;
    let theta_star: Vec<DVector<T>> = spec
        .alpha
        .iter()
        .map(|a| {
            let mut th = DVector::<T>::zeros(d);
            th[0] = T::one();
            for j in 0..psi_dim {
                th[j + 1] = -spec.eta * a[j];
            }
            th
        })
        .collect();
    let b = spec
        .alpha
        .iter()
        .map(|a| (T::one() + spec.eta * spec.eta * a.norm_squared()).sqrt())
        .fold(T::one(), |acc, x| acc.max(x));
    MnlMdp::new(fm, theta_star, spec.rewards.clone(), spec.initial_state, b)
}

/// Robust instance whose `α` encodes the instance's own optimal values.
///
/// Sets `ψ(s') = e_{s'}` and iterates `α_{h+1} ← V*_{h+1}` until the largest
/// change is at most `tol`. Since `α_{h+1}` only depends on later stages the
/// loop settles after at most `H + 1` sweeps. Returns the instance and the
/// number of sweeps.
pub fn kl_robust_with_true_values<T: Scalar>(
    mut spec: KlRobustSpec<T>,
    tol: T,
    max_iters: usize,
) -> Result<(MnlMdp<T>, usize)> {
    let ns = spec.num_states;
    spec.psi = (0..ns)
        .map(|s| DVector::from_fn(ns, |j, _| if j == s { T::one() } else { T::zero() }))
        .collect();
    spec.alpha = vec![DVector::zeros(ns); spec.horizon];
    for iter in 1..=max_iters {
        let mdp = kl_robust_instance(&spec)?;
        let tables = exact_value_iteration(&mdp);
        let mut change = T::zero();
        for h in 0..spec.horizon {
            let next = DVector::from_column_slice(&tables.v[h + 1]);
            change = change.max((&next - &spec.alpha[h]).amax());
            spec.alpha[h] = next;
        }
        if change <= tol {
            return Ok((kl_robust_instance(&spec)?, iter));
        }
    }
    Err(Error::numerical(
        "kl_robust_with_true_values",
        format!("alpha did not settle within {max_iters} sweeps"),
    ))
}

/// Random robust instance: every state reachable, nominal log-weights
/// uniform in `[−1, 1]`, rewards uniform in `[0, 1]`, and `α` set to the
/// instance's own optimal values. Feature dimension is `num_states + 1`.
pub fn random_kl_robust_instance<T: Scalar>(
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    eta: f64,
    seed: u64,
) -> Result<MnlMdp<T>> {
    if num_states == 0 || num_actions == 0 || horizon == 0 {
        return Err(Error::invalid("num_states, num_actions and horizon must be positive"));
    }
    let mut rng = instance_rng(seed);
    let n = horizon * num_states * num_actions;
    let reachable: Vec<Vec<usize>> = vec![(0..num_states).collect(); n];
    let nominal: Vec<Vec<T>> = (0..n)
        .map(|_| {
            (0..num_states)
                .map(|_| T::lit(rng.random_range(-1.0..=1.0f64).exp()))
                .collect()
        })
        .collect();
    let rewards: Vec<T> = (0..n).map(|_| T::lit(rng.random::<f64>())).collect();
    let spec = KlRobustSpec {
        num_states,
        num_actions,
        horizon,
        reachable,
        nominal,
        psi: Vec::new(),
        alpha: Vec::new(),
        eta: T::lit(eta),
        rewards,
        initial_state: 0,
    };
    Ok(kl_robust_with_true_values(spec, T::tol(1e-10), horizon + 5)?.0)
}

fn unit_ball_point<R: Rng + ?Sized>(rng: &mut R, dim: usize, radius: f64) -> Vec<f64> {
    let g: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
    let n = g.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
    let r = radius * rng.random::<f64>().powf(1.0 / dim as f64);
    g.iter().map(|x| x / n * r).collect()
}

/// Random fixture: every state reachable from every `(h, s, a)`, features
/// uniform in the unit ball, `θ*_h` uniform in the ball of radius `B`,
/// rewards uniform in `[0, 1]`, start in state 0.
pub fn random_tabular_instance<T: Scalar>(
    num_states: usize,
    num_actions: usize,
    d: usize,
    horizon: usize,
    param_bound: f64,
    seed: u64,
) -> Result<MnlMdp<T>> {
    if num_states == 0 || num_actions == 0 || d == 0 || horizon == 0 {
        return Err(Error::invalid("all instance sizes must be positive"));
    }
    if !(param_bound > 0.0) || !param_bound.is_finite() {
        return Err(Error::invalid("parameter bound must be positive"));
    }
    let mut rng = instance_rng(seed);
    let n = horizon * num_states * num_actions;
    let mut contexts = Vec::with_capacity(n);
    for _ in 0..n {
        let rows = DMatrix::from_fn(num_states, d, |_, _| T::zero());
        let mut rows = rows;
        for i in 0..num_states {
            let p = unit_ball_point(&mut rng, d, 1.0);
            for j in 0..d {
                rows[(i, j)] = T::lit(p[j]);
            }
        }
        contexts.push(MnlContext::new(rows)?);
    }
    let reachable = vec![(0..num_states).collect::<Vec<_>>(); n];
    let theta_star = (0..horizon)
        .map(|_| DVector::from_iterator(d, unit_ball_point(&mut rng, d, param_bound).into_iter().map(T::lit)))
        .collect();
    let rewards = (0..n).map(|_| T::lit(rng.random::<f64>())).collect();
    let fm = FeatureMap::new(d, horizon, num_states, num_actions, T::one(), contexts, reachable)?;
    MnlMdp::new(fm, theta_star, rewards, 0, T::lit(param_bound))
}
