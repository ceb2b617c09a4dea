use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] skewlab::Error),
    #[error("io: {0}")]
    Io(String),
    #[error("artifact version mismatch: {0}")]
    Version(String),
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl CliError {
    /// 2 for exceeded budgets, 1 for every other contract error.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(skewlab::Error::Budget { .. } | skewlab::Error::DepthCap { .. }) => 2,
            _ => 1,
        }
    }
}
