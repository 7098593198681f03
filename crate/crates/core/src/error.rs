use thiserror::Error;

/// Errors produced by the cost model, the game solvers and the simulator.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    /// The worst-case relative accuracy reached 1, so the global iteration
    /// count is unbounded.
    #[error("divergence: {0}")]
    Divergence(String),

    #[error("client {id} has nu = 1 and no interior optimum")]
    DegenerateClient { id: usize },

    /// `g_k(r) < 1`; the best response is the trivial `theta = 1`.
    #[error("no interior solution: g = {g} < 1")]
    NoInteriorSolution { g: f64 },

    #[error("exhaustive search over {clients} clients exceeds the limit of {limit}; use alg2 instead")]
    TooManyClients { clients: usize, limit: usize },

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    Convergence { iterations: usize, residual: f64 },

    #[error("duplicate update for client {0}")]
    DuplicateUpdate(usize),

    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
