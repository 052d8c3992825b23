//! Orchestration of the anchored evolutionary SGD loop.

mod config;
mod phases;
mod run;

pub use config::EsgdConfig;
pub use phases::{
    backoff_sgd, fine_tune_member, init_population, sgd_phase, train_epoch, train_single_baseline,
    BackoffTrace, BaselineConfig,
};
pub use run::{
    build_pool, fine_tune, iterate_anchors, round_seed, run_esgd, run_generation, EsgdRun,
};
