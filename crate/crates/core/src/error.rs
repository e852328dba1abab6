use thiserror::Error;

use crate::kerndsl::{EvalError, ParseError};

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("need at least 4 nonzero samples, found {found}")]
    InsufficientSamples { found: usize },

    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    #[error("invalid epsilon grid: {0}")]
    InvalidGrid(String),

    #[error("invalid box: {0}")]
    InvalidBox(String),

    #[error("quadrature needs {requested} node coordinates, budget is {budget}")]
    BudgetExceeded { requested: usize, budget: usize },

    #[error("derivative order {order} exceeds the declared smoothness {available} and no finite-difference step was given")]
    MissingDerivatives { order: usize, available: usize },

    #[error("point {point:?} lies outside the domain")]
    PointOutsideDomain { point: Vec<f64> },

    #[error("probe around {center:?} with radius {radius} leaves the domain")]
    ProbeOutsideDomain { center: Vec<f64>, radius: f64 },

    #[error("quadrature rule does not match: {0}")]
    RuleMismatch(String),

    #[error("domain mismatch: {0}")]
    DomainMismatch(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("exponential overflow: Vol(K)*p(H) = {exponent} exceeds 700")]
    Overflow { exponent: f64 },

    #[error("tail bound {tail_bound:e} still above tolerance {tol:e} after {n_terms} terms")]
    NotReachable { n_terms: usize, tail_bound: f64, tol: f64 },

    #[error("kernel is not of logarithmic growth: {0}")]
    NotLogGrowth(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Parse(#[from] ParseError),

    #[error(transparent)]
    Eval(#[from] EvalError),
}

impl Error {
    pub(crate) fn non_finite(context: impl Into<String>) -> Self {
        Error::NonFinite { context: context.into() }
    }
}
