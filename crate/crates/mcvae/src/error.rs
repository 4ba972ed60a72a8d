use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AppError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {message}", path.display())]
    Format { path: PathBuf, message: String },
    #[error(transparent)]
    Core(#[from] mcvae_core::Error),
}

pub type AppResult<T> = Result<T, AppError>;

impl AppError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        AppError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn format(path: &Path, message: impl Into<String>) -> Self {
        AppError::Format {
            path: path.to_path_buf(),
            message: message.into(),
        }
    }

    /// Process exit code: 2 for configuration errors, 3 for I/O and file
    /// format errors, 4 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        use mcvae_core::Error as E;
        match self {
            AppError::Config(_) => 2,
            AppError::Io { .. } | AppError::Format { .. } => 3,
            AppError::Core(e) => match e {
                E::Config(_) | E::Dimension(_) => 2,
                E::Input(_) | E::CorruptWeights(_) => 3,
                E::NotSquare { .. } | E::Singular { .. } | E::Numerical(_) => 4,
            },
        }
    }
}
