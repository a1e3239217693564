use thiserror::Error;

/// Errors produced while assembling, fitting or scoring a problem.
#[derive(Debug, Error)]
pub enum FitError {
    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("parameter {0} lies outside [0, 1]")]
    OutOfDomain(f64),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("column block {0} has zero Frobenius norm and can never be selected")]
    ZeroColumnBlock(usize),

    #[error("penalty matrix is numerically singular")]
    SingularPenalty,

    #[error("spectrum has {found} usable eigenvalues, {needed} requested")]
    InsufficientSpectrum { needed: usize, found: usize },

    #[error("regularization parameter did not converge after {0} outer iterations")]
    NonConvergence(usize),

    #[error("penalty norm of the current fit is zero")]
    ZeroPenalty,

    #[error("matrix is rank deficient: {0}")]
    RankDeficient(String),

    #[error("normal matrix AᵀA is numerically singular")]
    SingularNormalMatrix,

    #[error("problem size {size} exceeds the oracle cap {cap}")]
    TooLarge { size: usize, cap: usize },

    #[error("surface denominator vanishes at t={t}, s={s}")]
    SingularSample { t: f64, s: f64 },

    #[error("reference geometry has zero norm")]
    ZeroReference,

    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("incomplete grid: {0}")]
    IncompleteGrid(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl FitError {
    /// Process exit code used by the command-line harness.
    pub fn exit_code(&self) -> i32 {
        match self {
            FitError::InvalidConfig(_) | FitError::DimensionMismatch(_) => 2,
            FitError::Io(_) | FitError::Parse { .. } | FitError::IncompleteGrid(_) => 4,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, FitError>;
