use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("degenerate domain: rejection sampling accepted {accepted} of {trials} draws")]
    DegenerateDomain { accepted: usize, trials: usize },

    #[error("unsupported derivative order {0} (at most 2)")]
    UnsupportedOrder(usize),

    #[error("non-finite value {value} at point {point:?}")]
    NonFiniteData { point: Vec<f64>, value: f64 },

    #[error("point {0:?} lies outside the rectangle")]
    OutsideRectangle(Vec<f64>),

    #[error("unsupported domain: {0}")]
    UnsupportedDomain(String),

    #[error("unknown problem id `{0}`")]
    NotFound(String),

    #[error("Gauss-Newton diverged at iteration {iteration}: non-finite residual")]
    Diverged { iteration: usize },

    #[error("linear algebra failure: {0}")]
    Linalg(String),

    #[error("malformed data: {0}")]
    Decode(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl From<ndarray_linalg::error::LinalgError> for Error {
    fn from(e: ndarray_linalg::error::LinalgError) -> Self {
        Error::Linalg(e.to_string())
    }
}
