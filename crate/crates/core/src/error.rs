use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("unknown atom `{0}`")]
    UnknownAtom(String),

    #[error("dimension mismatch: expected {expected} atoms, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("environment failure: {0}")]
    Environment(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Usage and configuration problems map to exit code 2, everything else to 1.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            _ => 1,
        }
    }
}
