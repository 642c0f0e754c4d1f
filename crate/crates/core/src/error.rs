use thiserror::Error;

/// Errors raised across the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("adjacency matrix is not square ({rows}x{cols})")]
    NonSquare { rows: usize, cols: usize },
    #[error("adjacency entry ({row},{col}) is negative: {value}")]
    NegativeWeight { row: usize, col: usize, value: f64 },
    #[error("adjacency diagonal entry ({index},{index}) must be zero, got {value}")]
    NonzeroDiagonal { index: usize, value: f64 },
    #[error("coupling s_{agent} = 0; agent {agent} has no neighbors and no leader pin")]
    ZeroCoupling { agent: usize },
    #[error("all leader gains are zero; the leader is disconnected from the group")]
    IsolatedNetwork,
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("observer gain vector is empty")]
    EmptyGains,
    #[error("matrix is not Hurwitz: {context}")]
    NotHurwitz { context: String },
    #[error("Lyapunov solve residual {residual:.3e} exceeds tolerance {tolerance:.3e}")]
    IllConditioned { residual: f64, tolerance: f64 },
    #[error("non-finite state for agent {agent} at t = {time}")]
    NonFiniteState { agent: usize, time: f64 },
    #[error("state divergence: agent {agent} reached |x| = {value:.3e} at t = {time}")]
    Divergence { agent: usize, time: f64, value: f64 },
    #[error("non-finite controller output for agent {agent}")]
    NonFiniteResult { agent: usize },
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("fixed-time condition violated: {0}")]
    ConditionViolated(String),
    #[error("comparison ODE step too coarse: V went negative after {retries} halvings")]
    StepTooCoarse { retries: usize },
    #[error("trace is empty")]
    EmptyTrace,
    #[error("tail window [{tail_start}, ..] is empty for horizon {horizon}")]
    EmptyTail { tail_start: f64, horizon: f64 },
    #[error("virtual control for stage {stage} requested before stage {missing}")]
    StageOrderViolation { stage: usize, missing: usize },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
