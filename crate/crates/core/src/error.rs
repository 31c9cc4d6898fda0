use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("quadrature did not converge (achieved error {achieved:.3e})")]
    QuadratureNonConvergence { achieved: f64 },

    /// Points that fall outside the extended grid of an h-field.
    #[error("{count} of {total} evaluation points lie outside the extended grid")]
    Extrapolation { count: usize, total: usize },

    #[error("resource limit exceeded: {0}")]
    Resource(String),

    #[error("invalid instance: {0}")]
    Validity(String),

    #[error("net spacing violated: closest member is {gap:.3e} from the template, spacing is {delta:.3e}")]
    Spacing { gap: f64, delta: f64 },

    #[error("experiment failed: {0}")]
    Experiment(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("config parse error: {0}")]
    Toml(#[from] toml::de::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn precondition(msg: impl Into<String>) -> Self {
        Error::Precondition(msg.into())
    }
}
