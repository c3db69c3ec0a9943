use dcs_core::DcsError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config error: {0}")]
    Config(String),

    #[error("numerical failure: {0}")]
    Numerical(#[from] DcsError),

    #[error("i/o error: {0}")]
    Io(String),

    #[error("verification failed: {0}")]
    Verification(String),
}

impl ExperimentError {
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Verification(_) => 1,
            ExperimentError::Config(_) => 2,
            ExperimentError::Numerical(_) | ExperimentError::Io(_) => 3,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            ExperimentError::Config(_) => "config",
            ExperimentError::Numerical(_) => "numerical",
            ExperimentError::Io(_) => "io",
            ExperimentError::Verification(_) => "verification",
        }
    }

    /// One-line JSON record for stderr.
    pub fn record(&self) -> String {
        serde_json::json!({
            "error": self.kind(),
            "exit_code": self.exit_code(),
            "message": self.to_string(),
        })
        .to_string()
    }
}

impl From<std::io::Error> for ExperimentError {
    fn from(e: std::io::Error) -> Self {
        ExperimentError::Io(e.to_string())
    }
}

impl From<csv::Error> for ExperimentError {
    fn from(e: csv::Error) -> Self {
        ExperimentError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, ExperimentError>;
