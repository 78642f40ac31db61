//! Episodic MNL MDPs: simulation, exact dynamic-programming oracles and
//! instance generators.

mod geometric;
mod instances;
mod json;
mod mdp;
mod rng;

pub use geometric::geometric_sum_check;
pub use instances::{
    hard_instance, hard_instance_params, kl_robust_instance, kl_robust_with_true_values,
    random_kl_robust_instance, random_tabular_instance, HardInstanceParams, KlRobustSpec,
};
pub use json::InstanceDocument;
pub(crate) use mdp::argmax;
pub use mdp::{
    exact_value_iteration, rollout, sigma_bar_on_trajectory, sigma_bar_under_optimal_policy,
    step, MnlMdp, MonteCarloEstimate, Trajectory, TransitionRecord, ValueTables,
};
pub use rng::{episode_rng, instance_rng};
