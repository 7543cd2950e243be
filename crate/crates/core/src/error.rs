use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("{path}: line {line}: {reason}")]
    Parse { path: PathBuf, line: usize, reason: String },

    #[error("{path}: {reason}")]
    Input { path: PathBuf, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(
        "no sigma in [{sigma_lo}, {sigma_hi}] reaches dissatisfied fraction in [{target_lo}, {target_hi}]; \
         achievable fractions span [{achieved_lo:.4}, {achieved_hi:.4}]"
    )]
    InfeasibleCalibration {
        sigma_lo: f64,
        sigma_hi: f64,
        target_lo: f64,
        target_hi: f64,
        achieved_lo: f64,
        achieved_hi: f64,
    },

    #[error("instance has {users} candidate users, above the exact-solver limit of {limit}; use the greedy solver")]
    Intractable { users: usize, limit: usize },

    #[error("user {0} appears in both the respondent and the predicted label sets")]
    OverlappingLabels(usize),

    #[error("config: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
