//! Desk-scale experiment: configuration, data generation, the pipeline over
//! all model variants, and the comparison report.

mod config;
mod data;
mod desk;
mod report;

pub use config::ExperimentConfig;
pub use data::{pair_suite, sub_seed, teacher_subset, DeskData};
pub use desk::{probe_control, run_desk, run_seed, DeskRun, ProbeControl, SeedRun, Variant};
pub use report::{comparison_table, ComparisonTable};
