use std::path::Path;

use thiserror::Error;

use probecal_core::agreement::AgreementError;
use probecal_core::clustering::ClusterError;
use probecal_core::data::DataError;
use probecal_core::diagnostics::DiagnosticsError;
use probecal_core::inference::InferenceError;
use probecal_core::simulate::SimError;

#[derive(Debug, Error)]
pub enum CliError {
    /// Invalid or missing arguments after flags and config are combined.
    #[error("{0}")]
    Usage(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Simulation(#[from] SimError),
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
    #[error(transparent)]
    Agreement(#[from] AgreementError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error("serialisation failed: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Config(_) => "config",
            CliError::Io { .. } => "io",
            CliError::Data(_) => "data",
            CliError::Simulation(_) => "simulation",
            CliError::Inference(_) => "inference",
            CliError::Diagnostics(_) => "diagnostics",
            CliError::Agreement(_) => "agreement",
            CliError::Cluster(_) => "cluster",
            CliError::Json(_) => "serialization",
        }
    }

    pub fn is_usage(&self) -> bool {
        matches!(self, CliError::Usage(_) | CliError::Config(_))
    }
}
