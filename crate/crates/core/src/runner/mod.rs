//! Config files, end-to-end runs and the ablation suites.

mod config;
mod run;
mod suite;

pub use config::{DatasetSource, ExperimentConfig, KEYS, FULL_SCALE};
pub use run::{
    federation_config, format_best, format_partition_stats, inspect_partition, partition_for, prepare, run, Prepared,
    RunOutcome,
};
pub use suite::{run_suite, Suite, SuiteOutcome, SuiteRow, SEEDS_PER_CELL};
