use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("need at least 2 samples per epoch, found {0}")]
    TooFewSamples(usize),

    #[error("input contains non-finite values")]
    NonFinite,

    #[error("reference covariance is singular (eigenvalue ratio {ratio:e})")]
    SingularReference { ratio: f64 },

    #[error("need at least {required} quadrics, found {found}")]
    TooFewQuadrics { found: usize, required: usize },

    #[error(
        "coefficient matrix has numerical rank {found}, expected {expected}; \
         for noisy input use the approximate estimator"
    )]
    RankMismatch { expected: usize, found: usize },

    #[error(
        "elimination row is not divisible by the pivot variable (residual {residual:e} > {tolerance:e}); \
         input is not exact or not generic, use the approximate estimator"
    )]
    NotDivisible { residual: f64, tolerance: f64 },

    #[error("linear constraints have rank {rank} but at most {max} are allowed for the requested subspace")]
    DimensionConflict { rank: usize, max: usize },

    #[error("singular value decomposition failed")]
    SvdFailed,

    #[error("frame is not orthonormal (deviation {0:e})")]
    NotOrthonormal(f64),

    #[error("projected covariance is not positive definite")]
    SingularProjection,

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
