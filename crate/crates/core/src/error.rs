use thiserror::Error;

/// Errors raised by the numerical kernels, samplers and training loop.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid value for `{name}`: {reason}")]
    InvalidArgument { name: &'static str, reason: String },

    #[error("{operation} is not defined for a {found} model")]
    WrongModel {
        operation: &'static str,
        found: &'static str,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("root finding for {what} did not converge (target {target:e})")]
    NoConvergence { what: &'static str, target: f64 },

    #[error("sampler `{source_name}` failed: {message}")]
    Sampler { source_name: String, message: String },

    #[error("training diverged at iteration {iteration}: {reason}")]
    Diverged { iteration: usize, reason: String },

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidArgument {
            name,
            reason: reason.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub(crate) fn ensure_finite(name: &'static str, x: f64) -> Result<f64> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::invalid(name, format!("must be finite, got {x}")))
    }
}

pub(crate) fn ensure_positive(name: &'static str, x: f64) -> Result<f64> {
    if x.is_finite() && x > 0.0 {
        Ok(x)
    } else {
        Err(Error::invalid(name, format!("must be positive and finite, got {x}")))
    }
}

pub(crate) fn ensure_probability(name: &'static str, p: f64) -> Result<f64> {
    if p > 0.0 && p < 1.0 {
        Ok(p)
    } else {
        Err(Error::invalid(name, format!("must lie in (0, 1), got {p}")))
    }
}
