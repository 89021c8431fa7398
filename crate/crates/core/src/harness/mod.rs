//! Experiment drivers and their configuration.

pub mod bench;
pub mod config;
pub mod engine;
pub mod forgetting;
pub mod metrics;
pub mod scenario;
pub mod trials;

pub use config::{ExperimentConfig, Generator, Method, MvOnlyPlacement};
pub use scenario::{run_scenario, MetricsRecord};
