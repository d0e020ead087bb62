use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("mesh parse error at line {line}: {msg}")]
    MeshParse { line: usize, msg: String },

    #[error("mesh invariant violated: {0}")]
    MeshInvalid(String),

    #[error("singular matrix: zero pivot at index {0}")]
    SingularPivot(usize),

    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("control set empty for required flux (target {target:.6e}, reachable [{lo:.6e}, {hi:.6e}])")]
    InfeasibleFlux { target: f64, lo: f64, hi: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error("expression error: {0}")]
    Expr(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
