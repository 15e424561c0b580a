use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument is outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A configuration value is invalid. `path` names the offending field.
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    /// The Gram matrix of the zero-forcing precoder is (numerically) singular.
    #[error("ill-conditioned zero-forcing Gram matrix (condition number {condition:.3e})")]
    IllConditioned { condition: f64 },

    /// Root finding did not reach the requested target.
    #[error("convergence error: {0}")]
    Convergence(String),

    /// Too few Monte-Carlo frames were supplied.
    #[error("insufficient ensemble: {got} frames supplied, at least {required} required")]
    InsufficientEnsemble { got: usize, required: usize },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    /// True for errors caused by the configuration rather than the numerics.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config { .. })
    }
}
