use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid rotation: {0}")]
    InvalidRotation(String),
    #[error("invalid patch: {0}")]
    InvalidPatch(String),
    #[error("invalid class distribution: {0}")]
    InvalidDistribution(String),
    #[error("class id {class_id} out of range for {num_classes} classes")]
    InvalidClass { class_id: usize, num_classes: usize },
    #[error("invalid cost matrix: {0}")]
    InvalidCost(String),
    #[error("cardinality mismatch: expected {expected}, found {found}")]
    CardinalityMismatch { expected: usize, found: usize },
    #[error("point set is empty")]
    EmptyPointSet,
    #[error("no mutually valid pixels")]
    NoValidPixels,
    #[error("pixel ({x}, {y}) outside {width}x{height} map")]
    OutOfBounds {
        x: i64,
        y: i64,
        width: u32,
        height: u32,
    },
    #[error("no valid depth around pixel ({x}, {y})")]
    NoDepth { x: usize, y: usize },
    #[error("invalid depth: {0}")]
    InvalidDepth(String),
    #[error("map of {width}x{height} is smaller than the 3x3 kernel")]
    TooSmall { width: u32, height: u32 },
    #[error("empty input")]
    EmptyInput,
    #[error("could not place object {object} after {attempts} attempts")]
    PlacementFailed { object: usize, attempts: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid camera intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("invalid image size: {0}")]
    InvalidSize(String),
    #[error("{path}: line {line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("dangling reference: {0}")]
    DanglingReference(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Process exit code for the command-line tool: 2 for IO failures, 3 for
    /// everything that is a validation failure of the inputs.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Io { .. } => 2,
            _ => 3,
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
