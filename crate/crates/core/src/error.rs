use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FspaceError {
    #[error("nodes not F-unisolvent: Vandermonde rank {rank} < dimension {dim}")]
    NotUnisolvent { rank: usize, dim: usize },
    #[error("{nodes} nodes cannot carry a {dim}-dimensional space")]
    TooFewNodes { nodes: usize, dim: usize },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadratureError {
    #[error("moment oracle failed: last two estimates {previous:e} and {last:e}")]
    MomentOracle { previous: f64, last: f64 },
    #[error("empty compressed system: all singular values below {eps:e}")]
    EmptyCompression { eps: f64 },
    #[error(
        "infeasible or slow, add nodes: best residual {residual:e} after {iterations} iterations"
    )]
    Pocs { residual: f64, iterations: usize },
    #[error("increase surface nodes (part {part}): {source}")]
    Surface {
        part: usize,
        #[source]
        source: Box<QuadratureError>,
    },
    #[error("increase interior nodes: {0}")]
    Volume(#[source] Box<QuadratureError>),
    #[error("node escalation exceeded its ceiling of {ceiling} {what}")]
    Escalation { what: &'static str, ceiling: usize },
    #[error(transparent)]
    Fspace(#[from] FspaceError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OperatorError {
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error(transparent)]
    Fspace(#[from] FspaceError),
    #[error(
        "anti-symmetric Q_A not found: best residual {residual:e} after {iterations} iterations"
    )]
    Antisymmetric { residual: f64, iterations: usize },
    #[error("operator check '{check}' failed: measured {measured:e}, limit {limit:e}")]
    Invariant {
        check: &'static str,
        measured: f64,
        limit: f64,
    },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("non-conforming face nodes between element {elem} part {part} and element {other}")]
    NonConforming {
        elem: usize,
        part: usize,
        other: usize,
    },
    #[error("conservation violated at interface: weights differ by {diff:e} (element {elem}, part {part})")]
    WeightMismatch { elem: usize, part: usize, diff: f64 },
    #[error("invalid mesh: {0}")]
    Invalid(String),
    #[error(transparent)]
    Operator(#[from] OperatorError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("non-finite value in element {elem} at t = {time}")]
    NonFinite { elem: usize, time: f64 },
    #[error("problem needs an exact solution to compute errors")]
    NoExactSolution,
    #[error("invalid solver input: {0}")]
    Invalid(String),
}
