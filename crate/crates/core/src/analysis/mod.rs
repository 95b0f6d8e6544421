//! Offline checks and measurements over recorded traces.

mod knowledge;
mod metrics;
mod safety;
mod stats;

pub use metrics::{fallback_stats, measure, FallbackStats, MetricsReport};
pub use safety::{check_safety, Divergence, SafetyReport};
pub use stats::{linear_fit, power_fit, wilson_interval, LinearFit};

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AnalysisError {
    #[error("malformed trace: {0}")]
    MalformedTrace(String),
    #[error("no completed fallback instances")]
    NoFallbacks,
}
