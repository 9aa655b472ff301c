use thiserror::Error;

/// Errors raised by the coding toolkit.
///
/// Variants are grouped so that front ends can map them onto a small set of
/// exit categories (see [`Error::category`]).
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("distribution is not normalized: {0}")]
    NotNormalized(String),
    #[error("length {0} is not a power of two")]
    NotPowerOfTwo(usize),
    #[error("symbol {symbol} out of range for modulus {q}")]
    SymbolOutOfRange { symbol: u32, q: u32 },
    #[error("{0} is not prime")]
    NotPrime(u32),
    #[error("reconstruction symbol {0} has zero probability")]
    DegenerateSupport(u32),
    #[error("conditioning path at index {0} has zero probability")]
    ImpossiblePath(usize),
    #[error("enumeration guard exceeded: {needed} entries > limit {limit}")]
    GuardExceeded { needed: f64, limit: f64 },
    #[error("infeasible request: {0}")]
    Infeasible(String),
    #[error("no stored point satisfies the request: {0}")]
    NotFound(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("internal consistency check failed: {0}")]
    Assertion(String),
    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// Coarse error category, stable across releases.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Category {
    Config,
    Limit,
    Internal,
}

impl Error {
    pub fn category(&self) -> Category {
        match self {
            Error::GuardExceeded { .. } | Error::Infeasible(_) | Error::NotFound(_) => Category::Limit,
            Error::Assertion(_) | Error::ImpossiblePath(_) => Category::Internal,
            _ => Category::Config,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
