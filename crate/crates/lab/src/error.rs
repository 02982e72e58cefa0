use std::path::PathBuf;

use csp_core::Error as CoreError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("config: `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("capacity: predicted size {predicted} exceeds cap {cap}")]
    Capacity { predicted: u128, cap: u128 },

    #[error("runtime: {0}")]
    Runtime(String),

    #[error("io: {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl LabError {
    pub fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        LabError::Config {
            key: key.into(),
            reason: reason.into(),
        }
    }

    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Config { .. } => 2,
            LabError::Capacity { .. } => 3,
            LabError::Runtime(_) | LabError::Io { .. } => 4,
        }
    }
}

impl From<CoreError> for LabError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Parameter { name, reason } => LabError::config(config_key(name), reason),
            CoreError::Capacity { predicted, cap } => LabError::Capacity { predicted, cap },
            other => LabError::Runtime(other.to_string()),
        }
    }
}

/// Config key behind a library parameter name.
fn config_key(name: &str) -> &str {
    match name {
        "p" => "source.p",
        "m" => "measurement.m",
        "epsilon_code" => "csp.epsilon_code",
        "rate_slack" => "ucsp.rate_slack",
        "n_samples" => "dim.n_samples",
        "b_grid" => "dim.b_grid",
        "curve" => "dim.rd_bits",
        "value_dist" => "source.upper",
        "noise.sigma" => "noise.sigma_m",
        other => other,
    }
}

pub type LabResult<T> = std::result::Result<T, LabError>;
