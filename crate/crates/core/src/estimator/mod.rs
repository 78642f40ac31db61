//! Parameter estimation: the forced-exploration phase with its penalised
//! MLE and confidence sets, and the online mirror-descent updates of the
//! learning phase.

mod ellipsoid;
mod exploration;
mod omd;
mod radius;

pub use ellipsoid::{diameter, Ellipsoid};
pub use exploration::{ExplorationRecord, ExplorationState, VirtualRecord};
pub use omd::{project_surrogate, surrogate_value, EstimatorConfig, EstimatorState, StageDiagnostic};
pub use radius::{exploration_radius_sq, learning_radius, theoretical_tau, TauValue};
