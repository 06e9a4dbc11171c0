use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] gradtrack_core::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = BenchError> = std::result::Result<T, E>;

impl BenchError {
    /// Process exit code: 2 for divergence, 3 for invalid configuration.
    pub fn exit_code(&self) -> i32 {
        match self {
            BenchError::Core(e) if e.is_divergence() => 2,
            BenchError::Config(_) | BenchError::Core(gradtrack_core::Error::InvalidInput(_)) => 3,
            BenchError::Core(gradtrack_core::Error::Disconnected { .. }) => 3,
            _ => 1,
        }
    }
}
