use thiserror::Error;

/// Errors raised anywhere in the library.
///
/// Variants fall into three families that the command-line front end maps to
/// distinct exit codes: usage/config problems, I/O problems, and statistical
/// degeneracy (collinearity, undefined estimands).
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("aliasing: k_max = {k_max} exceeds m/2 = {half} for an m = {m} grid")]
    Aliasing { k_max: usize, m: usize, half: usize },

    #[error("invalid config field `{field}`: {reason}")]
    InvalidConfig { field: String, reason: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("fixed design columns are collinear (rank deficient, reciprocal condition {rcond:.3e}); offending columns: {}", columns.join(", "))]
    RankDeficient { columns: Vec<String>, rcond: f64 },

    #[error("design is collinear with the spatial basis (reciprocal condition {rcond:.3e}); offending columns: {}", columns.join(", "))]
    Collinear { columns: Vec<String>, rcond: f64 },

    #[error("degenerate exposure residual: stage-1 residual variance {residual_var:.3e} is below 1e-12 of var(Z) = {exposure_var:.3e}; the exposure is fully spatial (collinear with the basis)")]
    DegenerateResidual {
        residual_var: f64,
        exposure_var: f64,
    },

    #[error("degenerate exposure: var(Z) = 0")]
    DegenerateExposure,

    #[error("estimand undefined: {0}")]
    EstimandUndefined(String),

    #[error("linear solve failed: {0}")]
    Solve(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors that signal a statistically degenerate problem rather
    /// than bad input.
    pub fn is_degenerate(&self) -> bool {
        matches!(
            self,
            Error::RankDeficient { .. }
                | Error::Collinear { .. }
                | Error::DegenerateResidual { .. }
                | Error::DegenerateExposure
                | Error::EstimandUndefined(_)
                | Error::Solve(_)
        )
    }

    /// Process exit code: 2 usage/config, 3 I/O, 4 statistical degeneracy.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io(_) => 3,
            Error::Csv(e) if e.is_io_error() => 3,
            e if e.is_degenerate() => 4,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
