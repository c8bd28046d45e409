use thiserror::Error;

/// Errors raised by the simulator library.
#[derive(Debug, Error)]
pub enum Error {
    /// A model parameter is non-finite or outside its admissible range.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// An argument lies outside the domain of the function.
    #[error("domain error: {0}")]
    Domain(String),

    /// A grid or workload would exceed a configured cap.
    #[error("resource cap exceeded: {what} needs {requested} cells, cap is {cap}")]
    Resource { what: &'static str, requested: u64, cap: u64 },

    /// Configuration key rejected or malformed.
    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    /// The curve fitter ran out of budget; carries the best parameters found.
    #[error("fit did not converge (best a={a}, b={b}, mse={mse})")]
    Fit { a: f64, b: f64, mse: f64 },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::Parameter(format!("{name} must be finite, got {v}")))
    }
}

impl Error {
    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config { key: key.into(), message: message.into() }
    }
}
