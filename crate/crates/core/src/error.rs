use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    #[error("sample size {n} is too small (need at least {min})")]
    SampleTooSmall { n: usize, min: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("instrument has zero sample variance")]
    DegenerateInstrument,

    #[error("estimator denominator is exactly zero")]
    DegenerateDenominator,

    #[error("singular matrix in {0}")]
    SingularMatrix(&'static str),

    #[error("first-stage slope is zero; the ratio map is singular there")]
    IrrelevantInstrument,

    #[error("drifting first-stage constant `stock_c` is not set")]
    MissingStockConstant,

    #[error("penalty level must be strictly positive in this regime")]
    ZeroPenalty,

    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { got: usize, need: usize },

    #[error("invalid sweep configuration: {0}")]
    InvalidConfig(String),

    #[error("failed to build worker pool: {0}")]
    ThreadPool(String),
}

pub type Result<T> = std::result::Result<T, Error>;
