//! Error type shared by every module of the crate.

use thiserror::Error;

/// Errors raised by grid construction, field operations, solvers and I/O.
#[derive(Debug, Error)]
pub enum WrinkleError {
    /// A grid or frequency set violates its structural invariants.
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    /// A scalar parameter is outside its admissible range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Two operands live on incompatible grids.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// The requested construction needs more modes than the cap allows.
    #[error("mode cap {cap} too small: at least {required} modes are required")]
    ModeCapTooSmall { required: u32, cap: u32 },

    /// Too few y-samples to represent the highest mode without aliasing.
    #[error("aliasing: {got} y-samples cannot resolve mode index {mode} (need at least {needed})")]
    Aliasing { mode: u32, needed: usize, got: usize },

    /// A column of amplitudes is identically zero where the constraint is positive.
    #[error("constraint cannot be restored at node {node} (x = {x}): all amplitudes vanish")]
    ZeroColumn { node: usize, x: f64 },

    /// An optimizer stopped before meeting its tolerance.
    #[error("solver did not converge: {0}")]
    NonConvergence(String),

    /// A serialized artifact has an unsupported layout.
    #[error("schema error: {0}")]
    Schema(String),

    /// Filesystem failure.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// JSON encoding or decoding failure.
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    /// CSV encoding or decoding failure.
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, WrinkleError>;
