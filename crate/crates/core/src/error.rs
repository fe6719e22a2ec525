use thiserror::Error;

/// Every failure the engine can report.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("argument outside domain: {0}")]
    Domain(String),

    #[error("quadrature failed: {0}")]
    Quadrature(String),

    #[error("mapping is not a bijection on the feasible set: {0}")]
    Condition1Failed(String),

    #[error("kappa below neutral fiducial probability (kappa = {kappa}, neutral = {neutral})")]
    KappaBelowNeutral { kappa: f64, neutral: f64 },

    #[error("kappa must be below 1, got {0}")]
    KappaNotBelowOne(f64),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("density cannot be normalised: {0}")]
    Unnormalizable(String),

    #[error("metropolis coordinate `{0}` accepted no proposals during burn-in")]
    StuckChain(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}

/// Rejects a NaN or infinite parameter with a labelled message.
pub(crate) fn finite(name: &str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(invalid(format!("{name} must be finite, got {v}")))
    }
}

pub(crate) fn positive(name: &str, v: f64) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(invalid(format!("{name} must be finite and > 0, got {v}")))
    }
}
