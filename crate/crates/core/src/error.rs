use thiserror::Error;

/// Errors raised by the toolkit. Variant names follow the error vocabulary
/// used in reports and CLI diagnostics.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("density returned a non-finite or negative value ({value})")]
    NonfiniteValue { value: f64 },
    #[error("sampling plan is empty: {0}")]
    SamplingEmpty(&'static str),
    #[error("invalid dimensions: {0}")]
    InvalidDimensions(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("every start of the descent failed")]
    AllStartsFailed,
    #[error("normal vector is not unit length (|nu| = {norm})")]
    NonunitNormal { norm: f64 },
    #[error("normal vector is degenerate")]
    DegenerateNormal,
    #[error("closed form requires a density without explicit u-dependence")]
    UDependentDensity,
    #[error("regions overlap: {0}")]
    RegionOverlap(String),
    #[error("trace mismatch: {0}")]
    TraceMismatch(String),
    #[error("Cantor components are only supported for N = 1")]
    CantorIn2d,
    #[error("field is not a two-piece step field with a planar interface: {0}")]
    NotAStepField(String),
    #[error("hypothesis check failed: {0}")]
    HypothesisFail(String),
    #[error("expression error: {0}")]
    Expression(String),
    #[error("unknown density `{0}`")]
    UnknownDensity(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl Error {
    /// Stable upper-case identifier used in result files and the C interface.
    pub fn code(&self) -> &'static str {
        match self {
            Error::DimensionMismatch { .. } => "DIMENSION_MISMATCH",
            Error::NonfiniteValue { .. } => "NONFINITE_VALUE",
            Error::SamplingEmpty(_) => "SAMPLING_EMPTY",
            Error::InvalidDimensions(_) => "INVALID_DIMENSIONS",
            Error::InvalidArgument(_) => "INVALID_ARGUMENT",
            Error::AllStartsFailed => "ALL_STARTS_FAILED",
            Error::NonunitNormal { .. } => "NONUNIT_NORMAL",
            Error::DegenerateNormal => "DEGENERATE_NORMAL",
            Error::UDependentDensity => "U_DEPENDENT_DENSITY",
            Error::RegionOverlap(_) => "REGION_OVERLAP",
            Error::TraceMismatch(_) => "TRACE_MISMATCH",
            Error::CantorIn2d => "CANTOR_IN_2D",
            Error::NotAStepField(_) => "NOT_A_STEP_FIELD",
            Error::HypothesisFail(_) => "HYPOTHESIS_FAIL",
            Error::Expression(_) => "EXPRESSION",
            Error::UnknownDensity(_) => "UNKNOWN_DENSITY",
            Error::Config(_) => "CONFIG_PARSE",
            Error::Io(_) => "IO_ERROR",
        }
    }

    /// Whether the error stems from the inputs rather than from a solve.
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            Error::NonfiniteValue { .. } | Error::AllStartsFailed | Error::HypothesisFail(_) | Error::Io(_)
        )
    }
}
