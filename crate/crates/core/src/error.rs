use thiserror::Error;

/// Errors raised by constructions and checkers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("empty gamma vector")]
    EmptyGamma,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("shift {shift} out of range 1..{len}")]
    ShiftOutOfRange { shift: usize, len: usize },
    #[error("tail bound is only defined for balanced blocks")]
    NotBalanced,
    #[error("invalid digits: {0}")]
    InvalidDigits(String),
    #[error("point does not fit the odometer: {0}")]
    InvalidPoint(String),
    #[error("parameter overflow: {0}")]
    Overflow(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("squash constant c = {0} must lie in (1, e)")]
    SquashConstant(f64),
    #[error("continued fraction: {0}")]
    ContinuedFraction(String),
    #[error("tower level {level} out of range (depth {depth})")]
    TowerLevel { level: usize, depth: usize },
    #[error("degenerate interval: {0}")]
    Degenerate(String),
    #[error("construction inconsistency: {0}")]
    Construction(String),
    #[error("rigid time index {index} out of range 1..={max}")]
    RigidIndex { index: u64, max: u64 },
    #[error("squash recursion stalled at level {level}: {reason}")]
    RecursionStalled { level: u32, reason: String },
    #[error("empty partition")]
    EmptyPartition,
    #[error("return bound N must be at least 1")]
    ZeroBound,
    #[error("return machine shortfall: {0}")]
    HopfShortfall(String),
    #[error("perturbation hypothesis violated: m([psi not in V]) = {measured} is not below delta^2/N = {bound}")]
    PerturbationHypothesis { measured: String, bound: String },
    #[error("hypothesis failed at level {level}: {reason}")]
    LevelHypothesis { level: usize, reason: String },
    #[error("invalid system: {0}")]
    InvalidSystem(String),
    #[error("config: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
