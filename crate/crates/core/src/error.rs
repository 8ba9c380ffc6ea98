use thiserror::Error;

/// Errors raised across the pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("operation requires a finite chain, got the thermodynamic limit")]
    ThermodynamicSize,

    #[error("quadrature did not reach tolerance {tol:e} (estimate {estimate:e}) within {evaluations} panels")]
    QuadratureNonConvergence {
        tol: f64,
        estimate: f64,
        evaluations: usize,
    },

    #[error("correlator offset {0} missing from table")]
    MissingOffset(i64),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("state is not physical (trace deviation {trace_deviation:e}, asymmetry {asymmetry:e}, minimum eigenvalue {min_eigenvalue:e})")]
    Unphysical {
        trace_deviation: f64,
        asymmetry: f64,
        min_eigenvalue: f64,
    },

    #[error("eigensolver failed: {0}")]
    Eigensolver(String),

    #[error("local filtering failed: {0}")]
    Filtering(String),

    #[error("grid too narrow: {0}")]
    GridBoundary(String),

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("i/o error: {0}")]
    Io(String),

    #[error("format error: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;

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

impl Error {
    /// Stable machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::ThermodynamicSize => "thermodynamic_size",
            Error::QuadratureNonConvergence { .. } => "quadrature_non_convergence",
            Error::MissingOffset(_) => "missing_offset",
            Error::DimensionMismatch(_) => "dimension_mismatch",
            Error::Unphysical { .. } => "unphysical",
            Error::Eigensolver(_) => "eigensolver",
            Error::Filtering(_) => "filtering",
            Error::GridBoundary(_) => "grid_boundary",
            Error::DegenerateFit(_) => "degenerate_fit",
            Error::Numerical(_) => "numerical",
            Error::Io(_) => "io",
            Error::Format(_) => "format",
        }
    }

    /// Errors caused by the caller's input rather than by a computation.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::InvalidParameter(_)
                | Error::ThermodynamicSize
                | Error::DimensionMismatch(_)
                | Error::Io(_)
                | Error::Format(_)
        )
    }
}
