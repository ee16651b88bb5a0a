//! Sampling from q-densities and replicated Monte Carlo verification of the
//! estimator theory.

pub mod config;
pub mod experiment;
pub mod sampler;
pub mod stats;

pub use config::{BandwidthRule, BernsteinSpec, Check, ExperimentConfig, FloorRule, GridSpec, SamplingMode};
pub use experiment::{run_experiment, verify_bernstein, CheckOutcome, ExperimentReport, Summary, Table};
pub use sampler::{build_sampler, QSampler};
