use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("non-finite value at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("matrix is not symmetric")]
    NotSymmetric,
    #[error("singular matrix: pivot {pivot:e} at index {index} below threshold {threshold:e}")]
    SingularMatrix {
        index: usize,
        pivot: f64,
        threshold: f64,
    },
    #[error("eigensolver did not converge (attained residual {residual:e})")]
    NoConvergence { residual: f64 },
    #[error("invalid number of components k={k} for dimension {n}")]
    InvalidK { k: usize, n: usize },
    #[error("singular factor covariance")]
    SingularFactorCovariance,
    #[error("singular cross-sectional beta Gram matrix (collinear loadings)")]
    SingularBetaGram,
    #[error("degenerate residual scale {scale:e}: the panel is fitted exactly")]
    DegenerateScale { scale: f64 },
    #[error("delta {delta} outside (0, {upper})")]
    DeltaOutOfRange { delta: f64, upper: f64 },
    #[error("cross-section too small: N={0} (need N >= 3)")]
    NTooSmall(usize),
    #[error("nominal level must lie in (0,1), got {0}")]
    InvalidTau(f64),
    #[error("moment parameter nu must be >= 4, got {0}")]
    InvalidNu(f64),
    #[error("LIL threshold needs B >= 16, got B={0}")]
    BTooSmallForLil(usize),
    #[error("degrees of freedom must exceed 2, got {0}")]
    InvalidDf(f64),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("non-positive price {price} for asset {asset} at {date}")]
    NonPositivePrice {
        asset: String,
        date: String,
        price: f64,
    },
    #[error("missing risk-free rate at {0}")]
    MissingRiskFree(String),
    #[error("window of {window} periods does not fit {available} available periods")]
    WindowTooShort { window: usize, available: usize },
    #[error("no security survives the missing-data filter in window ending {0}")]
    NoSurvivingSecurities(String),
    #[error("malformed input: {0}")]
    Parse(String),
    #[error("replication {replication} of cell {cell} failed (seed {seed:#018x}): {source}")]
    Replication {
        cell: usize,
        replication: usize,
        seed: u64,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
