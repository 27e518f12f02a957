use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("numerical error in {stage}: {detail}")]
    Numerical { stage: String, detail: String },

    #[error("precondition violated: {0}")]
    PreconditionViolation(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("I/O error: {0}")]
    Io(String),

    #[error("ell_max = {ell_max} too small: |s_{ell_max}(0)| = {tail} is not below mu/2 = {half_mu}")]
    EllMaxTooSmall { ell_max: usize, tail: f64, half_mu: f64 },
}

impl Error {
    pub fn numerical(stage: &str, detail: impl Into<String>) -> Self {
        Error::Numerical {
            stage: stage.to_string(),
            detail: detail.into(),
        }
    }

    pub fn invalid(detail: impl Into<String>) -> Self {
        Error::InvalidArgument(detail.into())
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
