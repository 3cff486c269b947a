use thiserror::Error;

/// Errors raised by the simulator library.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid or inconsistent configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// A formula was evaluated outside its domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// A numerical failure: non-finite state, failed eigensolve, drift past a gate.
    #[error("numerical error: {0}")]
    Numeric(String),

    /// Propagation produced a non-finite value.
    #[error("non-finite state after step {step}")]
    NonFinite { step: usize },

    /// Recomputed checkpoint disagrees with the stored one.
    #[error("checkpoint drift {drift:.3e} exceeds {gate:.1e} at step {step}; increase the checkpoint count")]
    CheckpointDrift { step: usize, drift: f64, gate: f64 },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

pub(crate) fn domain_err(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
