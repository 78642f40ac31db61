//! Seeded regret experiments: configuration, runs and sweeps, CSV output
//! and aggregation.

mod config;
mod io;
mod run;

pub use config::{parse_horizons, parse_seeds, Algo, ConfigOverrides, InstanceKind, RunConfig, SeedSpec};
pub use io::{
    aggregate, aggregate_records, read_records, summarize, write_records, write_summary, AggregateRow, SummaryRow, CSV_HEADER,
};
pub use run::{build_instance, run_one, run_one_detailed, run_sweep, RegretRecord, RunFailure, RunOutput, SweepOutcome};
