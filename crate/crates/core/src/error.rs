use thiserror::Error;

use crate::dsl::DslError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid interval: right endpoint {t_end} must exceed left endpoint {a}")]
    InvalidInterval { a: f64, t_end: f64 },

    #[error("grid needs at least 2 nodes, got {0}")]
    TooFewNodes(usize),

    #[error("index {index} out of range {min}..={max}")]
    IndexOutOfRange {
        index: usize,
        min: usize,
        max: usize,
    },

    #[error("t = {t} lies outside [{a}, {t_end}]")]
    OutOfDomain { t: f64, a: f64, t_end: f64 },

    #[error("sampler returned non-finite value {value} at node {node}")]
    NonFiniteSample { node: usize, value: f64 },

    #[error("multiplier coefficient alpha must be finite, got {0}")]
    NonFiniteAlpha(f64),

    #[error("multiplier exponent alpha*(s-t) = {exponent} exceeds the overflow guard")]
    Overflow { exponent: f64 },

    #[error("non-finite value in equation {component} at node {node}")]
    NonFiniteValue { component: usize, node: usize },

    #[error(
        "iteration {iteration} diverged at equation {component}, node {node} (max-norm {max_norm})"
    )]
    Divergence {
        iteration: usize,
        component: usize,
        node: usize,
        max_norm: f64,
    },

    #[error("rk4 diverged at t = {t}")]
    Rk4Divergence { t: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("reference trajectory is sparser than the solution ({reference} < {solution} nodes)")]
    GridMismatch { reference: usize, solution: usize },

    #[error("error values must be positive, got {coarse} and {fine}")]
    NonPositiveError { coarse: f64, fine: f64 },

    #[error("unknown problem {0:?}")]
    UnknownProblem(String),

    #[error("problem file: {0}")]
    Problem(String),

    #[error(transparent)]
    Dsl(#[from] DslError),
}
