use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("unsupported dimension {0}; density evaluation covers d = 1 and d = 2")]
    UnsupportedDimension(usize),

    #[error("argument error: {0}")]
    Argument(String),

    #[error("supercritical drift: gap {gamma} <= 0, the integrability condition d/p + alpha/q < alpha - 1 fails")]
    Supercritical { gamma: f64 },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("picard iteration did not converge after {} iterations (last residual {:e})", history.len(), history.last().copied().unwrap_or(f64::NAN))]
    Divergence { history: Vec<f64> },

    #[error("tail mass {leaked:.4} escaped the lattice (limit {limit}); widen the lattice extent")]
    LatticeExtent { leaked: f64, limit: f64 },

    #[error("capacity error: {0}")]
    Capacity(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("config errors:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable tag used in structured error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::UnsupportedDimension(_) => "unsupported_dimension",
            Error::Argument(_) => "argument",
            Error::Supercritical { .. } => "supercritical",
            Error::Validation(_) => "validation",
            Error::Divergence { .. } => "divergence",
            Error::LatticeExtent { .. } => "lattice_extent",
            Error::Capacity(_) => "capacity",
            Error::Numeric(_) => "numeric",
            Error::Precondition(_) => "precondition",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

pub(crate) fn argument(msg: impl Into<String>) -> Error {
    Error::Argument(msg.into())
}
