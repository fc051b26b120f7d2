//! Command-line front end of the breast surface simulator: JSON run configs,
//! OFF/OBJ mesh files, CSV reports and phantom trajectories.

pub mod commands;
pub mod config;
pub mod io;

use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Format(String),
    #[error(transparent)]
    Numerical(#[from] bsim_core::Error),
    /// Outputs were written but the result is not trustworthy.
    #[error("{0}")]
    NotConverged(String),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Numerical(_) | Self::NotConverged(_) => 2,
            _ => 1,
        }
    }
}
