//! Experiment harness over the `ctcp` simulator.

pub mod config;
pub mod experiments;
pub mod report;
pub mod selftest;

pub use config::{ConfigError, ExperimentConfig};
pub use experiments::{
    run_fairness, run_sweep, run_trace, FairnessOutput, SweepOutput, TraceOutput, TraceParams,
};
