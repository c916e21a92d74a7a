use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix is not diagonalizable (eigenvector condition number {cond:.3e})")]
    NonDiagonalizable { cond: f64 },
    #[error("need at least 2 usable samples for an exponential fit, found {found}")]
    InsufficientSamples { found: usize },
    #[error("Hamiltonian is not Hermitian (deviation {deviation:.3e})")]
    NonHermitianH { deviation: f64 },
    #[error("no clean spectral gap: {0}")]
    NoGap(String),
    #[error("ambiguous mode matching: {0}")]
    AmbiguousMatching(String),
    #[error("A(t) is singular at t = {t} (condition number {cond:.3e})")]
    SingularA { t: f64, cond: f64 },
    #[error("N is singular (condition number {cond:.3e})")]
    SingularN { cond: f64 },
    #[error("degenerate denominator |lambda_s - lambda_f| = {value:.3e}")]
    DegenerateDenominator { value: f64 },
    #[error("surviving eigenvalue {value} is not zero")]
    NonzeroSurvivingEigenvalue { value: String },
    #[error("fast block of the generator is singular")]
    SingularFastBlock,
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("linear algebra failure: {0}")]
    Linalg(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl From<ndarray_linalg::error::LinalgError> for Error {
    fn from(e: ndarray_linalg::error::LinalgError) -> Self {
        Error::Linalg(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
