use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Integrability certification failed for a function/measure pair.
    #[error("function is not integrable against the measure: {0}")]
    NotIntegrable(String),
    /// A function was required to be square integrable and is not.
    #[error("function is not square integrable: {0}")]
    NotSquareIntegrable(String),
    /// Orthonormalization dropped every candidate member.
    #[error("all members of the system were dropped as linearly dependent")]
    EmptySystem,
    /// The exponential-tail moment condition on the jump measure does not hold.
    #[error("exponential tail condition failed: {0}")]
    TailConditionFailed(String),
    /// Operation requires a jump measure with a density.
    #[error("operation requires a density jump measure, got an atomic one")]
    DensityRequired,
    /// Indicator system intervals must stay away from the origin.
    #[error("interval ({0}, {1}] touches a neighborhood of zero")]
    IntervalTouchesZero(f64, f64),
    /// Simulation of an infinite-activity density without a truncation window.
    #[error("infinite-activity jump measure requires a positive truncation_eps")]
    InfiniteActivityWithoutTruncation,
    /// Two series do not come from the same simulated path/timeline.
    #[error("series were not built on the same path timeline")]
    PathMismatch,
    /// Tensor order and index tuple length disagree.
    #[error("order mismatch: {0} indices vs {1} tensor factors")]
    OrderMismatch(usize, usize),
    /// Closed-form reference only exists for low orders.
    #[error("no closed-form reference for order {0}")]
    UnsupportedOrder(usize),
    /// The martingale family is not closed under compensated covariation.
    #[error("family is not closed under compensated covariation on indices {0:?}")]
    FamilyNotClosed(Vec<usize>),
    /// A function that must be normalized is not.
    #[error("function is not normalized: norm^2 = {0}")]
    NotNormalized(f64),
    /// A chaos basis element has a vanishing second moment.
    #[error("ill-conditioned chaos basis: E[J^2] = {0} below threshold")]
    IllConditioned(f64),
    /// Oracle path requires a pure-jump model.
    #[error("exact oracle does not support a Gaussian component (sigma2 = {0})")]
    GaussianPartPresent(f64),
    /// Configuration parsing/validation failure with field-level context.
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    /// Output emission failed.
    #[error("i/o failure: {0}")]
    IoFailure(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
