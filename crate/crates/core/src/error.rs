use alloc::string::String;

use crate::expr::{EvalError, SyntaxError};

/// Errors raised across the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("Gamma function pole at z = {re} + {im}i")]
    Pole { re: f64, im: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("kernel argument modulus {modulus} is outside the convergence radius {radius}")]
    Radius { modulus: f64, radius: f64 },

    #[error("series cannot be inverted: leading Gamma-weighted coefficient has modulus {0}")]
    SingularSeries(f64),

    #[error("kernels do not share the same beta")]
    MismatchedBeta,

    #[error("grid needs at least {need} nodes, got {got}")]
    GridTooCoarse { need: usize, got: usize },

    #[error("non-finite sample at node {index}")]
    SingularSample { index: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("Gronwall premise violated: max g = {max_g} is not below {threshold}")]
    PremiseViolation { max_g: f64, threshold: f64 },

    #[error("g is not monotone non-decreasing at node {index}")]
    NonMonotoneG { index: usize },

    #[error("hypothesis inequality fails at node {index} by {excess}")]
    HypothesisViolation { index: usize, excess: f64 },

    #[error(transparent)]
    Eval(#[from] EvalError),

    #[error(transparent)]
    Syntax(#[from] SyntaxError),

    #[error("no convergence after {iterations} iterations (last change {last_change:e})")]
    NoConvergence { iterations: usize, last_change: f64 },

    #[error("singular linear system (zero pivot in column {0})")]
    LinearSolve(usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
