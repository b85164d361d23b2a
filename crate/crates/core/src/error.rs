use thiserror::Error;

/// Errors produced by the estimation, inference and simulation routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum NlrError {
    #[error("parameter outside the model domain: {0}")]
    Domain(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("tuning parameter alpha must be {expected}, got {got}")]
    Alpha { expected: &'static str, got: f64 },

    #[error("design matrix is numerically singular (condition number {condition:e})")]
    SingularDesign { condition: f64 },

    #[error("objective is not finite at the starting point (start {start})")]
    NonFiniteObjective { start: usize },

    #[error("degenerate scale estimate: all residuals are equal")]
    DegenerateScale,

    #[error("group too small: {per_group} observations per group, need at least {needed}")]
    GroupTooSmall { per_group: usize, needed: usize },

    #[error("no clean observations to evaluate the prediction error")]
    EmptyCleanSet,

    #[error("hypothesis matrix has rank {rank}, expected {rows}")]
    Rank { rank: usize, rows: usize },

    #[error("series failed to converge after {terms} terms")]
    SeriesDivergence { terms: usize },

    #[error("no grid point produced a valid fit")]
    NoValidGridPoint,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("input file is empty")]
    EmptyFile,

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for NlrError {
    fn from(e: std::io::Error) -> Self {
        NlrError::Io(e.to_string())
    }
}

impl NlrError {
    /// Stable machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            NlrError::Domain(_) => "domain",
            NlrError::Dimension(_) => "dimension",
            NlrError::Alpha { .. } => "alpha",
            NlrError::SingularDesign { .. } => "singular_design",
            NlrError::NonFiniteObjective { .. } => "non_finite_objective",
            NlrError::DegenerateScale => "degenerate_scale",
            NlrError::GroupTooSmall { .. } => "group_too_small",
            NlrError::EmptyCleanSet => "empty_clean_set",
            NlrError::Rank { .. } => "rank",
            NlrError::SeriesDivergence { .. } => "series_divergence",
            NlrError::NoValidGridPoint => "no_valid_grid_point",
            NlrError::InvalidArgument(_) => "invalid_argument",
            NlrError::Parse { .. } => "parse",
            NlrError::EmptyFile => "empty_file",
            NlrError::Io(_) => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, NlrError>;
