use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid or inconsistent model / experiment parameters.
    #[error("configuration error: {0}")]
    Config(String),

    /// Argument outside the domain of a function (e.g. an arrival count above the truncation).
    #[error("domain error: {0}")]
    Domain(String),

    /// A caller broke a documented precondition (infeasible action, mismatched state sets, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// The instance would not fit into the configured memory budget.
    #[error("resource limit exceeded: {what} needs about {needed} bytes, limit is {limit} bytes")]
    Resource { what: String, needed: u64, limit: u64 },

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("time limit of {limit_secs} s exceeded ({context})")]
    Timeout { limit_secs: f64, context: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
