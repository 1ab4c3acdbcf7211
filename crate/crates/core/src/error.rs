use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("rotation angle {angle} rad is outside the principal branch of the logarithm")]
    LogBranch { angle: f64 },

    #[error("need at least {required} points, got {got}")]
    TooFewPoints { required: usize, got: usize },

    #[error("degenerate registration: {valid} valid correspondences, need at least {required}")]
    DegenerateRegistration { valid: usize, required: usize },

    #[error("normal equations stayed singular after {attempts} damping attempts")]
    SingularSystem { attempts: usize },

    #[error("map point {0} is not in the local map")]
    StaleMapPoint(u64),

    #[error("{path}: malformed scan file, {len} bytes leaves a partial record at byte offset {offset}")]
    ScanSize {
        path: PathBuf,
        len: usize,
        offset: usize,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("trajectory lengths differ: estimate has {estimate} poses, ground truth has {truth}")]
    LengthMismatch { estimate: usize, truth: usize },

    #[error("trajectory needs at least 2 poses, got {got}")]
    TooFewPoses { got: usize },

    #[error("empty scan source")]
    EmptySource,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
