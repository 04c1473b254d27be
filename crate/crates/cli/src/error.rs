use std::fmt;

/// Failure classes mapped to process exit codes: configuration problems exit
/// 2, input data problems exit 3, numerical or runtime failures exit 4.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Data(String),
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "configuration error: {msg}"),
            CliError::Data(msg) => write!(f, "data error: {msg}"),
            CliError::Numerical(msg) => write!(f, "numerical failure: {msg}"),
        }
    }
}

impl std::error::Error for CliError {}

/// Computation-phase errors from the library are numerical failures.
impl From<mvprobit::Error> for CliError {
    fn from(e: mvprobit::Error) -> Self {
        CliError::Numerical(e.to_string())
    }
}
