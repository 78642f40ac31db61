//! Reinforcement learning in episodic MDPs whose transitions follow a
//! multinomial-logistic model.
//!
//! The library covers the MNL model itself ([`mnl`]), instances and exact
//! dynamic-programming oracles ([`env`]), parameter estimation
//! ([`estimator`]), optimistic planning ([`planner`]) and a seeded regret
//! benchmark ([`harness`]). Everything numeric is generic over [`Scalar`]
//! (`f32` or `f64`); the aliases below fix `f64`, which the harness uses.

pub mod env;
pub mod error;
pub mod estimator;
pub mod harness;
pub mod linalg;
pub mod mnl;
pub mod planner;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type MnlContextF64 = mnl::MnlContext<f64>;
pub type FeatureMapF64 = mnl::FeatureMap<f64>;
pub type MnlMdpF64 = env::MnlMdp<f64>;
pub type EllipsoidF64 = estimator::Ellipsoid<f64>;
pub type ExplorationStateF64 = estimator::ExplorationState<f64>;
pub type EstimatorStateF64 = estimator::EstimatorState<f64>;
pub type OptimisticTablesF64 = planner::OptimisticTables<f64>;

pub type MnlContextF32 = mnl::MnlContext<f32>;
pub type MnlMdpF32 = env::MnlMdp<f32>;
