use std::time::Instant;

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{Algo, InstanceKind, RunConfig};
use crate::env::{
    episode_rng, exact_value_iteration, hard_instance, random_kl_robust_instance, random_tabular_instance, rollout,
    MnlMdp, Trajectory,
};
use crate::error::{Error, Result};
use crate::estimator::{EstimatorConfig, EstimatorState, ExplorationState, StageDiagnostic};
use crate::mnl::{exact_kappa_rho, kappa_upper_bound, ModelConstants};
use crate::planner::{act, optimistic_backward_induction, ucrl_mnl_ol_tables, FwConfig};

/// Regrets are rounded to multiples of `2⁻³²` so that running sums are exact.
const REGRET_QUANTUM: f64 = 4_294_967_296.0;

fn quantize(x: f64) -> f64 {
    (x * REGRET_QUANTUM).round() / REGRET_QUANTUM
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretRecord {
    pub seed: u64,
    pub algo: Algo,
    pub d: usize,
    #[serde(rename = "H")]
    pub horizon: usize,
    #[serde(rename = "T")]
    pub episodes: usize,
    pub episode: usize,
    pub instant_regret: f64,
    pub cum_regret: f64,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, Default)]
pub struct RunOutput {
    pub records: Vec<RegretRecord>,
    pub diagnostics: Vec<StageDiagnostic>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunFailure {
    pub horizon: usize,
    pub seed: u64,
    pub numerical: bool,
    pub message: String,
    /// Episodes completed before the failure.
    pub completed: usize,
}

#[derive(Debug, Clone, Default)]
pub struct SweepOutcome {
    pub records: Vec<RegretRecord>,
    pub failures: Vec<RunFailure>,
    pub diagnostics: Vec<StageDiagnostic>,
}

pub fn build_instance(config: &RunConfig, horizon: usize, seed: u64) -> Result<MnlMdp<f64>> {
    match config.instance {
        InstanceKind::Hard => hard_instance(config.d, horizon, config.episodes, seed, config.per_stage_resample),
        InstanceKind::Random => random_tabular_instance(
            config.num_states,
            config.num_actions,
            config.d,
            horizon,
            config.param_bound,
            seed,
        ),
        InstanceKind::KlRobust => {
            random_kl_robust_instance(config.num_states, config.num_actions, horizon, config.eta, seed)
        }
    }
}

/// `ρ` of the instance and the closed-form upper bound `U²e^{4B}` for `κ`.
fn run_constants(mdp: &MnlMdp<f64>) -> Result<ModelConstants<f64>> {
    let mut c = exact_kappa_rho(mdp, 0)?;
    c.kappa = kappa_upper_bound(mdp.feature_map().max_reachable(), mdp.param_bound());
    if !(c.rho > 0.0) {
        return Err(Error::invalid("instance has a stage whose features all vanish"));
    }
    Ok(c)
}

enum Learner {
    Exploring(ExplorationState<f64>),
    Learning(EstimatorState<f64>),
    Oracle,
}

fn estimator_config(config: &RunConfig, mdp: &MnlMdp<f64>) -> EstimatorConfig<f64> {
    EstimatorConfig {
        lambda: config.lambda,
        delta: config.delta,
        param_bound: mdp.param_bound(),
        eta_omd: config.eta_omd,
        beta_scale: config.beta_scale,
    }
}

fn finish_exploration(config: &RunConfig, mdp: &MnlMdp<f64>, state: &ExplorationState<f64>) -> Result<EstimatorState<f64>> {
    let theta_hats = state.mle(mdp)?;
    let sets = state.confidence_sets(mdp, &theta_hats, config.delta)?;
    EstimatorState::new(estimator_config(config, mdp), mdp.dim(), mdp.horizon(), Some(sets))
}

fn learn_from(est: &mut EstimatorState<f64>, mdp: &MnlMdp<f64>, traj: &Trajectory<f64>) -> Result<()> {
    for step in &traj.steps {
        let outcome = mdp
            .feature_map()
            .outcome_index(step.stage, step.state, step.action, step.next_state)
            .expect("observed transition is reachable");
        est.omd_update(step.stage, mdp.context(step.stage, step.state, step.action), outcome)?;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn play_episode(
    config: &RunConfig,
    mdp: &MnlMdp<f64>,
    policy: &[Vec<usize>],
    learner: &mut Learner,
    t: usize,
    tau: usize,
    fw: &FwConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Trajectory<f64>> {
    let (traj, next) = match learner {
        Learner::Oracle => (rollout(mdp, |h, s| policy[h][s], rng)?, None),
        Learner::Exploring(state) => {
            let traj = state.exploration_episode(mdp, rng)?;
            let next = if state.episodes() == tau {
                Some(Learner::Learning(finish_exploration(config, mdp, state)?))
            } else {
                None
            };
            (traj, next)
        }
        Learner::Learning(est) => {
            let tables = match config.algo {
                Algo::UcrlMnlOl => ucrl_mnl_ol_tables(mdp, est, t, config.beta_scale)?,
                _ => optimistic_backward_induction(mdp, est, t, fw)?,
            };
            let traj = rollout(mdp, |h, s| act(&tables, h, s), rng)?;
            learn_from(est, mdp, &traj)?;
            (traj, None)
        }
    };
    if let Some(n) = next {
        *learner = n;
    }
    Ok(traj)
}

/// Full run for one horizon and seed, with diagnostics. On failure the error
/// is returned with the number of completed episodes.
pub fn run_one_detailed(config: &RunConfig, horizon: usize, seed: u64) -> std::result::Result<RunOutput, (Error, usize)> {
    let mut out = RunOutput::default();
    let fail = |e: Error, done: usize| (e, done);
    config.validate().map_err(|e| fail(e, 0))?;
    let mdp = build_instance(config, horizon, seed).map_err(|e| fail(e, 0))?;
    let optimal = exact_value_iteration(&mdp);
    let s1 = mdp.initial_state();
    let v_star = optimal.v[0][s1];
    let fw = FwConfig {
        max_iters: config.fw_iters,
        ..FwConfig::default()
    };
    let tau = config.exploration_episodes();

    let mut learner = match config.algo {
        Algo::Oracle => Learner::Oracle,
        Algo::UcrlMnlOl => Learner::Learning(
            EstimatorState::new(estimator_config(config, &mdp), mdp.dim(), mdp.horizon(), None).map_err(|e| fail(e, 0))?,
        ),
        Algo::Livarot => {
            let constants = run_constants(&mdp).map_err(|e| fail(e, 0))?;
            let state = ExplorationState::new(&mdp, constants, config.lambda0, tau).map_err(|e| fail(e, 0))?;
            if tau == 0 {
                Learner::Learning(finish_exploration(config, &mdp, &state).map_err(|e| fail(e, 0))?)
            } else {
                Learner::Exploring(state)
            }
        }
    };

    let mut cum = 0.0;
    for t in 1..=config.episodes {
        let started = Instant::now();
        let mut rng = episode_rng(seed, t as u64);
        let episode = play_episode(config, &mdp, &optimal.policy, &mut learner, t, tau, &fw, &mut rng);
        let traj = episode.map_err(|e| fail(e, t - 1))?;
        let instant = quantize(v_star - traj.total_reward());
        cum += instant;
        out.records.push(RegretRecord {
            seed,
            algo: config.algo,
            d: config.d,
            horizon,
            episodes: config.episodes,
            episode: t,
            instant_regret: instant,
            cum_regret: cum,
            wall_ms: if config.record_timing {
                started.elapsed().as_secs_f64() * 1e3
            } else {
                0.0
            },
        });
        if config.diagnostics_every > 0 && t % config.diagnostics_every == 0 {
            if let Learner::Learning(est) = &learner {
                for h in 0..mdp.horizon() {
                    let diag = est
                        .diagnostic(h, t, &mdp.theta_star()[h], mdp.feature_map())
                        .map_err(|e| fail(e, t))?;
                    out.diagnostics.push(diag);
                }
            }
        }
    }
    Ok(out)
}

/// Per-episode regret records of one run.
pub fn run_one(config: &RunConfig, horizon: usize, seed: u64) -> Result<Vec<RegretRecord>> {
    run_one_detailed(config, horizon, seed)
        .map(|o| o.records)
        .map_err(|(e, _)| e)
}

/// All `(H, seed)` runs of the configuration, in parallel. Output is ordered
/// by horizon (as listed), then seed (as listed), then episode; failed runs
/// are reported and skipped.
pub fn run_sweep(config: &RunConfig) -> Result<SweepOutcome> {
    config.validate()?;
    let jobs: Vec<(usize, u64)> = config
        .horizons
        .iter()
        .flat_map(|&h| config.seeds.iter().map(move |&s| (h, s)))
        .collect();
    let results: Vec<_> = jobs
        .par_iter()
        .map(|&(h, s)| (h, s, run_one_detailed(config, h, s)))
        .collect();
    let mut sweep = SweepOutcome::default();
    for (horizon, seed, result) in results {
        match result {
            Ok(out) => {
                sweep.records.extend(out.records);
                sweep.diagnostics.extend(out.diagnostics);
            }
            Err((e, completed)) => {
                log::error!("run H={horizon} seed={seed} failed after {completed} episodes: {e}");
                sweep.failures.push(RunFailure {
                    horizon,
                    seed,
                    numerical: e.is_numerical(),
                    message: e.to_string(),
                    completed,
                });
            }
        }
    }
    Ok(sweep)
}
