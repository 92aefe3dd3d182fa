use thiserror::Error;

/// Errors raised by the simulation and solver layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: &'static str, reason: String },

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("window error: {0}")]
    Window(String),

    #[error("grid alignment error: {0}")]
    Alignment(String),

    #[error("stiffness guard: dt = {dt} exceeds the limit {limit}")]
    Stiffness { dt: f64, limit: f64 },

    #[error("divergence at step {step} (t = {t})")]
    Divergence { step: usize, t: f64 },

    #[error("contraction violated: epsilon = {epsilon} with q = {q} (need q < 1, epsilon_0 = {epsilon0})")]
    ContractionViolated { epsilon: f64, q: f64, epsilon0: f64 },

    #[error("Picard iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("domain error: {0}")]
    Domain(String),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::Parameter { name, reason: reason.into() }
    }

    /// Short machine-readable tag for the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Parameter { .. } => "parameter",
            Error::Configuration(_) => "configuration",
            Error::Window(_) => "window",
            Error::Alignment(_) => "alignment",
            Error::Stiffness { .. } => "stiffness",
            Error::Divergence { .. } => "divergence",
            Error::ContractionViolated { .. } => "contraction_violated",
            Error::NonConvergence { .. } => "non_convergence",
            Error::Domain(_) => "domain",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
