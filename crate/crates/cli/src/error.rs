use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] latentmove_core::Error),
    #[error(transparent)]
    ServerConfig(#[from] latentmove_server::ConfigError),
    #[error("reading {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("writing {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
    #[error("parsing {path}: {source}")]
    Toml { path: PathBuf, source: toml::de::Error },
    #[error("{0}")]
    Usage(String),
    #[error("server: {0}")]
    Serve(std::io::Error),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub fn write_file(path: &std::path::Path, bytes: impl AsRef<[u8]>) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|source| CliError::Write {
            path: dir.into(),
            source,
        })?;
    }
    std::fs::write(path, bytes).map_err(|source| CliError::Write {
        path: path.into(),
        source,
    })
}

pub fn create_dir(path: &std::path::Path) -> CliResult<()> {
    std::fs::create_dir_all(path).map_err(|source| CliError::Write {
        path: path.into(),
        source,
    })
}
