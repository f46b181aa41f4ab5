use thiserror::Error;

/// Errors produced by the link simulator.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller broke an operation's input contract (lengths, ranges, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Parity-check matrix construction failed.
    #[error("code construction failed: {0}")]
    Construction(String),

    /// Malformed alist text.
    #[error("alist parse error at line {line}: {msg}")]
    Alist { line: usize, msg: String },

    /// Requested image rejection ratio cannot be reached with the given phase mismatch.
    #[error("IRR {requested_db:.3} dB is not reachable with phase mismatch {theta_deg:.3} deg (supremum {supremum_db:.3} dB)")]
    InfeasibleIrr {
        requested_db: f64,
        theta_deg: f64,
        supremum_db: f64,
    },

    /// Inconsistent run configuration (missing checkpoint, mismatched code, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// Checkpoint text could not be parsed.
    #[error("checkpoint parse error at line {line}: {msg}")]
    CheckpointParse { line: usize, msg: String },

    /// Checkpoint was produced for a different parity-check matrix.
    #[error("checkpoint code digest {found} does not match expected {expected}")]
    DigestMismatch { expected: String, found: String },

    /// Training produced a non-finite loss.
    #[error("training diverged at step {step}: loss = {loss}")]
    Diverged { step: usize, loss: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn contract(msg: impl Into<String>) -> Error {
    Error::Contract(msg.into())
}
