use std::path::Path;

use serde_json::json;
use tsrcdf::corpus::CorpusError;
use tsrcdf::embeddings::EmbeddingError;
use tsrcdf::mlp::MlpError;
use tsrcdf::pipeline::PipelineError;
use tsrcdf::trainer::TrainError;
use tsrcdf::transfer::TransferError;

/// Failure of one command, mapped to an exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data { message: String, path: Option<String> },
    Provider(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data { .. } => 2,
            CliError::Provider(_) => 3,
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        CliError::Data {
            message: message.into(),
            path: None,
        }
    }

    pub fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError::Data {
            message: format!("{}: {e}", path.display()),
            path: Some(path.display().to_string()),
        }
    }

    /// Single-line JSON for stderr.
    pub fn to_json_line(&self) -> String {
        let (kind, message, path) = match self {
            CliError::Usage(m) => ("usage", m, None),
            CliError::Data { message, path } => ("data", message, path.as_ref()),
            CliError::Provider(m) => ("provider", m, None),
        };
        let mut v = json!({"error": kind, "code": self.code(), "message": message});
        if let Some(p) = path {
            v["path"] = json!(p);
        }
        v.to_string()
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        let path = match &e {
            CorpusError::Io { path, .. } | CorpusError::UnknownFormat(path) => Some(path.display().to_string()),
            _ => None,
        };
        CliError::Data {
            message: e.to_string(),
            path,
        }
    }
}

impl From<EmbeddingError> for CliError {
    fn from(e: EmbeddingError) -> Self {
        match e {
            EmbeddingError::Io(_)
            | EmbeddingError::CorruptFile(_)
            | EmbeddingError::HeaderMismatch { .. }
            | EmbeddingError::MissingVector(_) => CliError::data(e.to_string()),
            _ => CliError::Provider(e.to_string()),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Embedding(e) => e.into(),
            PipelineError::MissingRoleB => CliError::Usage(e.to_string()),
            _ => CliError::data(e.to_string()),
        }
    }
}

impl From<MlpError> for CliError {
    fn from(e: MlpError) -> Self {
        CliError::data(e.to_string())
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::InvalidConfig(_) => CliError::Usage(e.to_string()),
            TrainError::Corpus(e) => e.into(),
            _ => CliError::data(e.to_string()),
        }
    }
}

impl From<TransferError> for CliError {
    fn from(e: TransferError) -> Self {
        match e {
            TransferError::Corpus(e) => e.into(),
            TransferError::Pipeline(e) => e.into(),
            TransferError::Train(e) => e.into(),
            TransferError::Embedding(e) => e.into(),
            TransferError::InvalidPlan(m) => CliError::Usage(m),
            TransferError::Io { path, source } => CliError::Data {
                message: format!("{path}: {source}"),
                path: Some(path),
            },
            _ => CliError::data(e.to_string()),
        }
    }
}
