use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("grasp opening {opening:.4} m exceeds gripper limit {limit:.4} m")]
    OpeningLimit { opening: f64, limit: f64 },

    #[error("degenerate direction: {0}")]
    DegenerateDirection(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid scene spec: {0}")]
    InvalidSpec(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("schema violation: {0}")]
    Schema(String),

    #[error("unit mismatch: expected \"m\", found {0:?}")]
    Units(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable numeric code for each error kind.
    pub fn code(&self) -> u32 {
        match self {
            Error::InvalidArgument(_) => 10,
            Error::InvalidInput(_) => 11,
            Error::InsufficientData(_) => 12,
            Error::OpeningLimit { .. } => 20,
            Error::DegenerateDirection(_) => 21,
            Error::Precondition(_) => 22,
            Error::Config(_) => 30,
            Error::InvalidSpec(_) => 31,
            Error::Parse { .. } => 40,
            Error::Schema(_) => 41,
            Error::Units(_) => 42,
            Error::Io(_) => 50,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
