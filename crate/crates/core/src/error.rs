use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("input directory not found: {}", path.display())]
    MissingDirectory { path: PathBuf },

    #[error("no frames in {}", path.display())]
    NoFrames { path: PathBuf },

    #[error("only one frame in {}; at least two are required", path.display())]
    SingleFrame { path: PathBuf },

    #[error("{}: frame is {found_w}x{found_h}, expected {expected_w}x{expected_h}", path.display())]
    FrameSizeMismatch {
        path: PathBuf,
        expected_w: usize,
        expected_h: usize,
        found_w: usize,
        found_h: usize,
    },

    #[error("{}: cannot decode image: {message}", path.display())]
    Decode { path: PathBuf, message: String },

    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid config value for `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("invalid scenario: {0}")]
    Scenario(String),

    #[error("need at least {required} frames to bootstrap, got {got}")]
    TooFewFrames { required: usize, got: usize },

    #[error("tracker has not been bootstrapped")]
    NotBootstrapped,

    #[error("empty kernel support")]
    EmptySupport,

    #[error("template has zero total weight")]
    ZeroWeight,

    #[error("degenerate classes: class means are identical")]
    DegenerateClasses,

    #[error("empty ground truth")]
    EmptyGroundTruth,

    #[error("serialization: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Whether the error was caused by bad user input (as opposed to an
    /// internal failure). The CLI maps these to exit code 2.
    pub fn is_input_error(&self) -> bool {
        !matches!(
            self,
            Error::EmptySupport | Error::ZeroWeight | Error::DegenerateClasses
        )
    }
}
