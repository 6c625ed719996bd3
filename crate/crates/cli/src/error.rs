use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] fedpgn_core::Error),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("cannot parse {path}: {message}")]
    ConfigFile { path: String, message: String },

    #[error("{0} exists and is not empty; pass --force to overwrite")]
    OutputExists(String),

    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },

    #[error("cannot serialize output: {0}")]
    Serialize(String),
}

impl CliError {
    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.display().to_string(), source }
    }

    /// 2 for bad input or configuration, 3 for a numeric abort, 1 otherwise.
    pub fn exit_code(&self) -> u8 {
        use fedpgn_core::Error as E;
        match self {
            CliError::Core(E::NonFinite(_)) => 3,
            CliError::Core(E::Io(_)) | CliError::Io { .. } | CliError::Serialize(_) => 1,
            CliError::Core(_) | CliError::Config(_) | CliError::ConfigFile { .. } | CliError::OutputExists(_) => 2,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
