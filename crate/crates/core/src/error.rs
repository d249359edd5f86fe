use thiserror::Error;

use crate::config::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {}", format_violations(.0))]
    InvalidConfig(Vec<Violation>),

    #[error("quadrature did not converge (best estimate {value:.6e}, error estimate {error:.3e})")]
    NonConvergence { value: f64, error: f64 },

    #[error("void realization: neither tier has a base station inside the window")]
    VoidRealization,

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),

    #[error("bad value for `{key}`: {reason}")]
    BadValue { key: String, reason: String },

    #[error("unknown figure id {0} (expected 2, 3, 4 or 5)")]
    UnknownFigure(u32),

    #[error("config file parse error: {0}")]
    ConfigParse(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn format_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}
