use std::path::PathBuf;
use thiserror::Error;

pub type AppResult<T> = Result<T, AppError>;

#[derive(Debug, Error)]
pub enum AppError {
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: chns_core::Error,
    },

    #[error(transparent)]
    Core(#[from] chns_core::Error),
}

impl AppError {
    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> AppError {
        let path = path.into();
        move |source| AppError::Io { path, source }
    }
}

/// Labels a core failure with the pipeline stage it came from.
pub trait StageExt<T> {
    fn stage(self, stage: &'static str) -> AppResult<T>;
}

impl<T> StageExt<T> for chns_core::Result<T> {
    fn stage(self, stage: &'static str) -> AppResult<T> {
        self.map_err(|source| AppError::Stage { stage, source })
    }
}
