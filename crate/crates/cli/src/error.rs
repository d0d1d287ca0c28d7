use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Solver(#[from] contact_hj::Error),

    #[error("{0} of the checks exceeded their tolerance")]
    Property(usize),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Solver(e) if e.is_config() => 1,
            CliError::Solver(_) => 2,
            CliError::Property(_) => 3,
        }
    }
}
