use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Core(#[from] glad_core::Error),

    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("invalid config {}: {source}", path.display())]
    BadConfig { path: PathBuf, source: serde_json::Error },
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;
pub const EXIT_IO: i32 = 3;

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        use glad_core::Error as E;
        match self {
            Self::Usage(_) | Self::BadConfig { .. } => EXIT_USAGE,
            Self::Io { .. } | Self::Csv(_) => EXIT_IO,
            Self::Core(E::Io(_)) => EXIT_IO,
            Self::Core(E::InvalidConfig(_) | E::Json(_)) => EXIT_USAGE,
            Self::Core(_) => EXIT_NUMERICAL,
        }
    }
}

/// Attaches a path to a raw IO error.
pub(crate) fn io_at(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io { path: path.to_path_buf(), source }
}
