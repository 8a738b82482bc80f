use thiserror::Error;

/// Errors surfaced by the library. The CLI maps these onto process exit
/// codes, so the variants distinguish usage problems, numerical faults and
/// missing on-disk artifacts.
#[derive(Debug, Error)]
pub enum Error {
    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("numerical fault: {0}")]
    Numerical(String),

    #[error("rank-deficient regression: {0}")]
    RankDeficient(String),

    #[error("action-set mismatch: {0}")]
    ActionMismatch(String),

    #[error("missing artifact: {0}")]
    MissingArtifact(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
