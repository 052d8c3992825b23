//! Command-line surface: configuration files, run directories, checkpoints,
//! metrics and reports.

mod checkpoint;
mod codec;
mod commands;
mod config_file;
mod manifest;
mod metrics;
mod report;

pub use checkpoint::Checkpoint;
pub use commands::{
    cmd_baseline, cmd_iterate, cmd_report, load_config, read_params, write_params, BaselineOutcome,
    EsgdOptions, EsgdOutcome, RunDir,
};
pub use config_file::{
    template, BaselineSection, EsgdSection, EvolutionSection, OptimizerSection, RunConfigFile,
    ANALYTIC_TEMPLATE, BN50_TINY_TEMPLATE,
};
pub use manifest::RunManifest;
pub use metrics::{read_metrics, rows_from_history, MetricsRow, MetricsWriter};
pub use report::{build_report, Report, Summary, SUMMARY_HEADER};
