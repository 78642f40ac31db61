//! Optimistic planning over confidence ellipsoids, and the bonus-based
//! baseline planner.

mod baseline;
mod fw;
mod optimistic;

pub use baseline::{baseline_radius, ucrl_mnl_ol_tables};
pub use fw::{fw_inner_max, FwConfig, FwOutcome, StepRule};
pub use optimistic::{act, backward_induction_with, optimistic_backward_induction, OptimisticTables};
