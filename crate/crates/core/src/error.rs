use std::fmt;

use crate::grid::Field;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised by the solver and its I/O layer.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Invalid arguments: out-of-range indices, mismatched meshes, bad sizes.
    #[error("usage error: {0}")]
    Usage(String),
    /// Coefficient or data values that are non-positive, non-finite or
    /// evaluated outside their declared support.
    #[error("data error: {0}")]
    Data(String),
    /// Problem configuration is incomplete or fails validation.
    #[error("configuration error: {0}")]
    Config(String),
    /// The Courant check failed under the strict policy.
    #[error("stability check failed: {0}")]
    Stability(String),
    /// A tridiagonal elimination hit a zero or denormal pivot.
    #[error("singular system on {line}: {detail}")]
    Singular { line: String, detail: String },
    #[error("{0}")]
    Divergence(Box<Divergence>),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Details of a run that blew up, with the last level known to be finite.
#[derive(Debug)]
pub struct Divergence {
    pub level: usize,
    pub t: f64,
    pub detail: String,
    /// `(level, t, v)` of the last stable level, when one exists.
    pub last_stable: Option<(usize, f64, Field)>,
}

impl fmt::Display for Divergence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "divergence at level {} (t = {}): {}", self.level, self.t, self.detail)?;
        if let Some((m, t, _)) = &self.last_stable {
            write!(f, "; last stable level {m} (t = {t})")?;
        }
        Ok(())
    }
}

impl Error {
    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
