use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Validation(String),
    #[error("matrix is singular or not positive definite: {0}")]
    Singular(String),
    #[error("estimation failed: {0}")]
    Estimation(String),
    #[error("degenerate direction: {0}")]
    DegenerateDirection(String),
    #[error("unsupported moment order {0}")]
    UnsupportedOrder(u32),
    #[error("not applicable: {0}")]
    Inapplicable(String),
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Singular(_) | Error::Estimation(_) | Error::DegenerateDirection(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Validation(msg.into()))
}
