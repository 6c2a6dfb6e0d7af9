use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("scenario generation failed after {attempts} attempts; the configuration is over-constrained")]
    GenerationFailed { attempts: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("training diverged at epoch {epoch}: non-finite parameters")]
    DivergenceDetected { epoch: usize },
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("corrupt trace: {0}")]
    TraceCorrupt(String),
    #[error("invalid checkpoint: {0}")]
    CheckpointInvalid(String),
    #[error("invalid scenario file: {0}")]
    ScenarioInvalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
