use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = PszError> = std::result::Result<T, E>;

/// Coarse classification used to map failures onto process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad arguments or names supplied by the caller.
    Usage,
    /// Inputs on disk or in memory failed a structural check.
    Validation,
    /// A numerical routine could not produce an answer.
    Numerical,
}

#[derive(Debug, Error)]
pub enum PszError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("RT60 of {rt60} s gives absorption {alpha:.4} >= 1 for this room")]
    Unphysical { rt60: f64, alpha: f64 },

    #[error("singular geometry: {0}")]
    Singular(String),

    #[error("shape mismatch in {what}: expected {expected}, found {found}")]
    ShapeMismatch {
        what: &'static str,
        expected: String,
        found: String,
    },

    #[error("unknown mask pattern `{0}`")]
    UnknownMask(String),

    #[error("mask selects no control points")]
    EmptySelection,

    #[error("system is rank deficient (rank {rank} < {cols}) and lambda = 0")]
    RankDeficient { rank: usize, cols: usize },

    #[error("zero reference energy: {0}")]
    ZeroReference(String),

    #[error(
        "target bAE {target:.3} dB outside achievable range [{at_max:.3}, {at_min:.3}] dB \
         for lambda in [{lambda_min:e}, {lambda_max:e}]"
    )]
    BracketMiss {
        target: f64,
        lambda_min: f64,
        lambda_max: f64,
        at_min: f64,
        at_max: f64,
    },

    #[error("regularization search did not converge: {0}")]
    NoConvergence(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: not a PSZD file ({reason})")]
    Format { path: PathBuf, reason: String },

    #[error("{path}: schema version {found} is not supported (expected {expected})")]
    VersionMismatch {
        path: PathBuf,
        found: u32,
        expected: u32,
    },

    #[error("{path}: payload size mismatch, expected {expected} bytes, found {found}")]
    SizeMismatch {
        path: PathBuf,
        expected: u64,
        found: u64,
    },

    #[error("{path}: checksum mismatch")]
    ChecksumMismatch { path: PathBuf },

    #[error("scene config hash mismatch: expected {expected}, found {found}")]
    ConfigHashMismatch { expected: String, found: String },

    #[error("{path}: dimension mismatch, {reason}")]
    Dimension { path: PathBuf, reason: String },

    #[error("malformed {what}: {reason}")]
    Parse { what: String, reason: String },
}

impl PszError {
    pub fn kind(&self) -> ErrorKind {
        use PszError::*;
        match self {
            InvalidInput(_) | UnknownMask(_) => ErrorKind::Usage,
            Singular(_)
            | RankDeficient { .. }
            | ZeroReference(_)
            | BracketMiss { .. }
            | NoConvergence(_) => ErrorKind::Numerical,
            Unphysical { .. }
            | ShapeMismatch { .. }
            | EmptySelection
            | Io { .. }
            | Format { .. }
            | VersionMismatch { .. }
            | SizeMismatch { .. }
            | ChecksumMismatch { .. }
            | ConfigHashMismatch { .. }
            | Dimension { .. }
            | Parse { .. } => ErrorKind::Validation,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        PszError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(what: &'static str, expected: impl ToString, found: impl ToString) -> Self {
        PszError::ShapeMismatch {
            what,
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }
}
