//! Crate-wide error type.

/// Errors reported by the library.
///
/// The CLI maps these onto exit codes: configuration problems exit with 1,
/// numerical failures (singularity, ill-conditioning, non-convergence) with 2.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A precondition on an argument was violated.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The experiment configuration is malformed or inconsistent.
    #[error("config error: {0}")]
    Config(String),

    /// A graph operation could not be performed (disconnection, missing edge, ...).
    #[error("graph error: {0}")]
    Graph(String),

    /// A requested combinatorial object does not exist (e.g. no perfect matching).
    #[error("infeasible: {0}")]
    Infeasible(String),

    /// A linear system is singular to working precision.
    #[error("singular matrix: {0}")]
    Singular(String),

    /// A linear system is too ill-conditioned to trust.
    #[error("ill-conditioned system: estimated condition {est:.3e} exceeds limit {limit:.1e}")]
    IllConditioned { est: f64, limit: f64 },

    /// An iterative routine did not converge within its budget.
    #[error("no convergence: {0}")]
    NotConverged(String),

    /// A computed quantity failed its accuracy contract.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
