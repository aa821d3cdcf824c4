use std::path::{Path, PathBuf};

use glioma_core::Modality;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("case {case}: missing {} volume at {}", .modality.name(), .path.display())]
    MissingModality {
        case: String,
        modality: Modality,
        path: PathBuf,
    },
    #[error("case {case}: {detail}")]
    ShapeMismatch { case: String, detail: String },
    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {message}", .path.display())]
    Format { path: PathBuf, message: String },
    #[error("{}, line {line}: {message}", .path.display())]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },
    #[error("configuration error at `{key}`: {message}")]
    Config { key: String, message: String },
    #[error("missing upstream artifact {}", .path.display())]
    Dependency { path: PathBuf },
    #[error(transparent)]
    Core(#[from] glioma_core::Error),
}

pub type Result<T, E = PipelineError> = std::result::Result<T, E>;

impl PipelineError {
    pub fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        PipelineError::Io {
            path: path.as_ref().to_path_buf(),
            source,
        }
    }

    pub fn format(path: impl AsRef<Path>, message: impl std::fmt::Display) -> Self {
        PipelineError::Format {
            path: path.as_ref().to_path_buf(),
            message: message.to_string(),
        }
    }

    pub fn config(key: impl Into<String>, message: impl std::fmt::Display) -> Self {
        PipelineError::Config {
            key: key.into(),
            message: message.to_string(),
        }
    }

    /// Process exit status: 2 for configuration, 3 for missing upstream
    /// artifacts, 4 for any other stage failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config { .. } | PipelineError::Core(glioma_core::Error::Config(_)) => 2,
            PipelineError::Dependency { .. } => 3,
            _ => 4,
        }
    }
}
