use thiserror::Error;

/// Errors produced by the toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("points {0} and {1} are not connected")]
    Disconnected(usize, usize),

    #[error("invalid metric: {0}")]
    InvalidMetric(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("power iteration did not converge after {iterations} iterations (best estimate {estimate}, residual {residual:e})")]
    NoConvergence {
        estimate: f64,
        residual: f64,
        iterations: usize,
    },

    #[error("instance too large: {0}")]
    TooLarge(String),

    #[error("operator is not unitary (residual {0:e})")]
    NotUnitary(f64),

    #[error("no admissible radius for delta {delta}: best corner at y={y} has norm {best}")]
    NoAdmissibleRadius { delta: f64, y: usize, best: f64 },

    #[error("radius {radius} is not admissible for delta {delta}; failing points {failing:?}")]
    Inadmissible {
        delta: f64,
        radius: f64,
        failing: Vec<usize>,
    },

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    /// Stable short name of the variant, used in error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "invalid_argument",
            Error::Disconnected(..) => "disconnected",
            Error::InvalidMetric(_) => "invalid_metric",
            Error::ShapeMismatch(_) => "shape_mismatch",
            Error::NoConvergence { .. } => "no_convergence",
            Error::TooLarge(_) => "too_large",
            Error::NotUnitary(_) => "not_unitary",
            Error::NoAdmissibleRadius { .. } => "no_admissible_radius",
            Error::Inadmissible { .. } => "inadmissible",
            Error::Infeasible(_) => "infeasible",
            Error::Invariant(_) => "invariant",
            Error::Format(_) => "format",
            Error::Io(_) => "io",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
