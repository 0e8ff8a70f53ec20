use thiserror::Error;

/// Errors raised by the bound, calibration and coupling routines.
#[derive(Debug, Error)]
pub enum Error {
    /// Input data violates a structural invariant (sorted grids, masses, shapes).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Two objects that must share a grid do not.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// An index, maturity or key falls outside the admissible range.
    #[error("out of range: {0}")]
    OutOfRange(String),

    /// The optimization problem has no feasible point.
    #[error("infeasible: {context}: {diagnostic}")]
    Infeasible {
        context: String,
        diagnostic: String,
    },

    /// The solver stopped without an optimal certificate.
    #[error("solver failure ({status}): {context}")]
    Solver { status: String, context: String },

    /// A post-solve certificate check (duality, sign, residual) did not hold.
    #[error("numerical diagnostics failed: {0}")]
    Numerical(String),

    /// Solver output contradicts a structural property that must hold on
    /// every instance (e.g. relaxation sandwich).
    #[error("internal consistency violated: {0}")]
    Consistency(String),

    #[error("schema error in {location}: {message}")]
    Schema { location: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::ShapeMismatch(msg.into())
    }

    pub(crate) fn schema(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Schema {
            location: location.into(),
            message: message.into(),
        }
    }

    /// Short machine-readable category, used for CLI exit diagnostics.
    pub fn category(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "invalid-input",
            Error::ShapeMismatch(_) => "shape-mismatch",
            Error::OutOfRange(_) => "out-of-range",
            Error::Infeasible { .. } => "infeasible",
            Error::Solver { .. } => "solver",
            Error::Numerical(_) => "numerical",
            Error::Consistency(_) => "internal-consistency",
            Error::Schema { .. } => "schema",
            Error::Io(_) => "io",
            Error::Json(_) => "schema",
            Error::Csv(_) => "schema",
        }
    }
}
