use thiserror::Error;

use crate::time::SimTime;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EngineError {
    #[error("event scheduled at {at} but the clock is already at {now}")]
    ScheduleInPast { at: SimTime, now: SimTime },
}

#[derive(Debug, Error, PartialEq)]
pub enum TopologyError {
    #[error("leaf, spine and hosts-per-leaf counts must all be at least 1 (got {leaves}, {spines}, {hosts_per_leaf})")]
    ZeroCount {
        leaves: usize,
        spines: usize,
        hosts_per_leaf: usize,
    },
    #[error("link capacity must be positive")]
    ZeroCapacity,
    #[error("pattern {pattern} needs {needed}")]
    Unsupported {
        pattern: &'static str,
        needed: &'static str,
    },
}

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("utilization rho = {0} has no steady state (need 0 < rho < 1)")]
    Unstable(f64),
    #[error("arrival rate {lam} must be below service rate {mu}")]
    Overloaded { lam: f64, mu: f64 },
    #[error("{0}")]
    Invalid(String),
}

/// Scenario parse/validation failure, carrying the offending line when known.
#[derive(Debug, Error, PartialEq)]
#[error("{}{message}", line.map(|l| format!("line {l}: ")).unwrap_or_default())]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl ConfigError {
    pub fn at(line: usize, message: impl Into<String>) -> Self {
        ConfigError {
            line: Some(line),
            message: message.into(),
        }
    }

    pub fn new(message: impl Into<String>) -> Self {
        ConfigError {
            line: None,
            message: message.into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error("i/o error on {path}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}
