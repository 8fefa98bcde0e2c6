use thiserror::Error;

/// Errors produced by the numerical routines.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter left the domain on which an operation is defined.
    #[error("domain error: {0}")]
    Domain(String),
    /// A state or Riccati norm exceeded the blow-up guard; usually a sign of
    /// bad input scaling or a time step too coarse for the stiffest mode.
    #[error("blow-up in {context}: max-norm {norm:.3e} exceeded {limit:.3e}")]
    Blowup {
        context: String,
        norm: f64,
        limit: f64,
    },
    /// An index or time argument fell outside the stored range.
    #[error("out of range: {0}")]
    OutOfRange(String),
    /// Two arguments live on incompatible grids or have inconsistent dimensions.
    #[error("mismatch: {0}")]
    Mismatch(String),
}

impl Error {
    /// Prefixes the error message with the given context.
    pub(crate) fn with_context(self, prefix: &str) -> Error {
        match self {
            Error::Domain(s) => Error::Domain(format!("{prefix}: {s}")),
            Error::Blowup {
                context,
                norm,
                limit,
            } => Error::Blowup {
                context: format!("{prefix}: {context}"),
                norm,
                limit,
            },
            Error::OutOfRange(s) => Error::OutOfRange(format!("{prefix}: {s}")),
            Error::Mismatch(s) => Error::Mismatch(format!("{prefix}: {s}")),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
