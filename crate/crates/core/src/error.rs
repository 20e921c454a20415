use alloc::string::String;

/// Errors produced anywhere in the core engine.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("graph parse error at line {line}: {msg}")]
    GraphParse { line: usize, msg: String },
    #[error("asymmetric adjacency: region {from} lists {to} but not vice versa")]
    AsymmetricAdjacency { from: usize, to: usize },
    #[error("self-loop at region {0}")]
    SelfLoop(usize),
    #[error("duplicate edge {0}-{1}")]
    DuplicateEdge(usize, usize),
    #[error("graph is disconnected ({0} components)")]
    Disconnected(usize),
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("matrix is not positive definite (pivot {pivot})")]
    NotPositiveDefinite { pivot: usize },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("root bracket failure for q = {q}, alpha = {alpha}")]
    RootBracket { q: f64, alpha: f64 },
    #[error("quantile overflow: q = {0} exceeds 1e6")]
    QuantileOverflow(f64),
    #[error("non-finite log-posterior contribution at term {0}")]
    NonFinite(usize),
    #[error("Newton iteration did not converge after {0} iterations")]
    NewtonMaxIter(usize),
    #[error("hyperparameter optimisation did not converge after {0} iterations")]
    OptimNoConvergence(usize),
    #[error("grid integration supports at most 3 hyperparameters, got {0}")]
    GridTooLarge(usize),
    #[error("insufficient integration points: {0}")]
    InsufficientPoints(usize),
    #[error("data error: {0}")]
    Data(String),
    #[error("model error: {0}")]
    Model(String),
}

pub type Result<T> = core::result::Result<T, Error>;
