use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] besq_mf::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// 2 for configurations that fail validation, 3 for numerical or I/O
    /// failures of a valid configuration.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(e) if e.is_assumption() => 2,
            CliError::Core(besq_mf::Error::InvalidArgument(_)) => 2,
            CliError::Core(_) | CliError::Io(_) => 3,
        }
    }
}
