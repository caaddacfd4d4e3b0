use thiserror::Error;

pub type Result<T> = std::result::Result<T, FbError>;

#[derive(Debug, Error)]
pub enum FbError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("u0'' is undefined at t = {0} (only the right limit for t > 0 exists)")]
    UndefinedPoint(f64),

    #[error("integration failure at t = {t}: nonfinite state")]
    Integration { t: f64 },

    #[error("nonfinite value at node {node}")]
    NonFinite { node: usize },

    #[error("grid error: {0}")]
    Grid(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("solver diverged at iteration {iteration}")]
    Diverged { iteration: usize },

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("hypothesis error: {0}")]
    Hypothesis(String),

    #[error("not a free boundary point: {0}")]
    NotBoundaryPoint(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
    },

    #[error("verification failed: condition {condition} has margin {margin:e} at {witness:?}")]
    Verification {
        condition: String,
        margin: f64,
        witness: Vec<f64>,
    },

    #[error("no barrier constants found for eps = {eps} after {attempts} attempts")]
    NoConstantsFound { eps: f64, attempts: usize },

    #[error("transform error: {0}")]
    Transform(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
