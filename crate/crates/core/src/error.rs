use std::path::PathBuf;

/// Errors raised by network assembly, solvers, certificates and file ingestion.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("network has no PQ buses")]
    EmptyNetwork,

    #[error("bus index {index} out of range for a network with {n_buses} buses")]
    BusOutOfRange { index: usize, n_buses: usize },

    #[error("line {index}: {reason}")]
    InvalidLine { index: usize, reason: String },

    #[error("bus {0} is not connected to the slack bus")]
    Disconnected(usize),

    #[error("Y_LL is singular: pivot {pivot:.3e} at elimination step {step}")]
    Singular { step: usize, pivot: f64 },

    #[error("no-load voltage is zero at PQ bus {0}")]
    ZeroNoLoadVoltage(usize),

    #[error("voltage is zero at PQ bus {0}")]
    ZeroVoltage(usize),

    #[error("dimension mismatch: expected {expected} entries, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid volt-var curve: {0}")]
    InvalidCurve(String),

    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),

    #[error("anchor rejected: power mismatch {mismatch:.3e} p.u. exceeds {limit:.1e} p.u.")]
    AnchorMismatch { mismatch: f64, limit: f64 },

    #[error("anchor rejected: {0}")]
    InvalidAnchor(String),

    #[error("scenario '{id}': {reason}")]
    Scenario { id: String, reason: String },

    #[error("{source_name}: {message}")]
    Parse { source_name: String, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
