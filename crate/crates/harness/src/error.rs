use serde_json::json;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
    #[error("budget exceeded: sweep needs {runs} trajectory runs, cap is {cap}")]
    Budget { runs: u64, cap: u64 },
    #[error("run failed: {0}")]
    Run(String),
    #[error("report input: {0}")]
    Report(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Toml(#[from] toml::de::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl HarnessError {
    pub fn kind(&self) -> &'static str {
        match self {
            HarnessError::Config(_) | HarnessError::Toml(_) => "invalid-config",
            HarnessError::UnknownPreset(_) => "unknown-preset",
            HarnessError::Budget { .. } => "budget-exceeded",
            HarnessError::Run(_) => "run-failed",
            HarnessError::Report(_) | HarnessError::Csv(_) => "report-input",
            HarnessError::Io(_) => "io",
            HarnessError::Json(_) => "serialization",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Run(_) | HarnessError::Io(_) => 1,
            _ => 2,
        }
    }

    /// Machine-readable error record written to stderr on failure.
    pub fn record(&self) -> serde_json::Value {
        json!({
            "schema_version": crate::SCHEMA_VERSION,
            "error": { "kind": self.kind(), "message": self.to_string() },
        })
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;

pub(crate) fn config_err(e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Config(e.to_string())
}

pub(crate) fn run_err(e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Run(e.to_string())
}
