use thiserror::Error;

/// Errors raised by the simulation and certificate routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("no connected Erdős–Rényi sample after {attempts} attempts (n = {n}, p = {p})")]
    Disconnected { n: usize, p: f64, attempts: usize },

    #[error("matrix is not symmetric positive definite (min eigenvalue {min_eig:e})")]
    NotPositiveDefinite { min_eig: f64 },

    #[error("centralized solver stalled: residual {residual:e} after {iters} iterations")]
    SolverStalled { residual: f64, iters: usize },

    #[error("run diverged at t = {t}: error {err:e} exceeds the guard")]
    Diverged { t: f64, err: f64 },

    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64 },

    #[error("certificate construction failed: {0}")]
    Certificate(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// True for failures caused by numerical instability of a run.
    pub fn is_divergence(&self) -> bool {
        matches!(self, Error::Diverged { .. } | Error::NonFinite { .. })
    }
}
