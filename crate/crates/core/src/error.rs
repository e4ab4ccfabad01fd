use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("resource guard: {what} needs {required_bytes} bytes (cap {cap_bytes})")]
    Resource {
        what: String,
        required_bytes: u128,
        cap_bytes: u128,
    },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("non-physical state: {0}")]
    NotPhysical(String),

    #[error("rank deficient: numerical rank {rank} of {expected}")]
    RankDeficient { rank: usize, expected: usize },

    #[error(
        "probe set deficient: rank {rank} of {required} (probe condition number {condition:e})"
    )]
    ProbeDeficiency {
        rank: usize,
        required: usize,
        condition: f64,
    },

    #[error("undefined SNR: {0}")]
    UndefinedSnr(String),

    #[error("non-finite entries in {0}")]
    NonFinite(String),

    #[error("unknown {kind} `{name}` (available: {available})")]
    UnknownStrategy {
        kind: &'static str,
        name: String,
        available: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by invalid user input or files.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::Resource { .. } | Error::Io(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
