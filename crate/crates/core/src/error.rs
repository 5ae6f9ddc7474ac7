use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("root finding failed: {0}")]
    RootFindingFailed(String),

    #[error("order {0} exceeds the supported maximum of {max}", max = crate::euler_frobenius::MAX_ORDER)]
    OrderTooLarge(usize),

    #[error("tolerance {tol:e} needs {terms} series terms (cap {cap})")]
    ToleranceUnreachable { tol: f64, terms: usize, cap: usize },

    #[error("generator is not a Riesz generator: lower bound {0:e}")]
    DegenerateFrame(f64),

    #[error("weight is not integrable over the cube: {0}")]
    NonIntegrable(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid weight specification: {0}")]
    InvalidWeightSpec(String),

    #[error("quadrature budget exceeded: {0}")]
    QuadratureBudgetExceeded(String),

    #[error("Gram matrix is singular at pivot {pivot} (value {value:e})")]
    GramSingular { pivot: usize, value: f64 },

    #[error("mollifier moment order {gamma} is below [s] = {required}")]
    MomentDeficit { gamma: usize, required: i64 },

    #[error("system order {order} is below the required minimum {required}")]
    OrderTooSmall { order: usize, required: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
