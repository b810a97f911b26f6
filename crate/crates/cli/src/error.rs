use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),

    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },

    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },

    #[error("{}: {source}", path.display())]
    Input { path: PathBuf, source: darcy_jko::Error },

    #[error(transparent)]
    Solver(#[from] darcy_jko::Error),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> CliError {
        CliError::Io { path: path.to_path_buf(), source }
    }

    pub fn input(path: &Path, source: darcy_jko::Error) -> CliError {
        CliError::Input { path: path.to_path_buf(), source }
    }
}
