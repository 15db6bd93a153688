use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Guard(String),
    #[error("{0}")]
    Numerical(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn category(&self) -> &'static str {
        match self {
            Self::Validation(_) => "validation",
            Self::Guard(_) => "guard",
            Self::Numerical(_) => "numerical",
            Self::Io(_) => "io",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Validation(_) => 2,
            Self::Guard(_) => 3,
            Self::Numerical(_) => 4,
            Self::Io(_) => 5,
        }
    }
}

impl From<dulab::Error> for CliError {
    fn from(e: dulab::Error) -> Self {
        match e {
            dulab::Error::Invalid(m) => Self::Validation(m),
            dulab::Error::Guard(m) => Self::Guard(m),
            dulab::Error::Numerical(m) => Self::Numerical(m),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        Self::Io(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub fn validation<T>(field: &str, msg: impl std::fmt::Display) -> CliResult<T> {
    Err(CliError::Validation(format!("{field}: {msg}")))
}
