use dyson_jacobi::Error as CoreError;
use thiserror::Error;

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl HarnessError {
    /// 2 for configuration problems (including unwritable outputs), 3 for
    /// numerical failures. Verification failures are not errors; commands
    /// report them through their verdicts and exit with 1.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) | HarnessError::Io { .. } => 2,
            HarnessError::Numerical(_) => 3,
        }
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        HarnessError::Io { path: path.as_ref().display().to_string(), source }
    }
}

impl From<CoreError> for HarnessError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::InvalidParams(_)
            | CoreError::Ordering { .. }
            | CoreError::OutOfRange { .. }
            | CoreError::Dimension { .. }
            | CoreError::InvalidArgument(_)
            | CoreError::SizeGuard { .. } => HarnessError::Config(e.to_string()),
            CoreError::Collision { .. }
            | CoreError::Singular
            | CoreError::NonConvergence { .. }
            | CoreError::TuningFailure { .. }
            | CoreError::ChainsNotConverged { .. }
            | CoreError::InsufficientSignal(_)
            | CoreError::Numerical(_) => HarnessError::Numerical(e.to_string()),
        }
    }
}
