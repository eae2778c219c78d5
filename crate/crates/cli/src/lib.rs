//! Batch experiments over gwve-core: replicas run on counter-based streams, are merged
//! in replica order and compared against limit laws or the exact oracle.
//!
//! Each run writes `results.csv`, `theory.csv`, `report.json` and, for curve-shaped
//! experiments, `plots.svg` into the configured output directory.

pub mod config;
pub mod experiment;
mod plot;
pub mod report;
pub mod stats;

pub use config::{ExperimentConfig, ExperimentKind, Tolerances};
pub use experiment::run;
pub use report::{Report, ReportRow};
pub use stats::{ks_statistic, mutual_information, total_variation};
