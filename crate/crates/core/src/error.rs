use std::path::PathBuf;

/// Errors produced by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("atoms {i} and {j} are {distance:.3e} apart, below the hard floor")]
    AtomsTooClose { i: usize, j: usize, distance: f64 },

    #[error("could not place atom {atom} of sample {sample} after {attempts} attempts")]
    PlacementFailed {
        sample: usize,
        atom: usize,
        attempts: usize,
    },

    #[error("{count} of {total} training targets fall outside the histogram grid")]
    TargetsOutOfRange { count: usize, total: usize },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
