use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: vertex index {index} out of range (have {count})")]
    IndexOutOfRange {
        line: usize,
        index: i64,
        count: usize,
    },
    #[error("degenerate UV faces: {0:?}")]
    DegenerateUv(Vec<usize>),
    #[error("degenerate face {0}")]
    DegenerateFace(usize),
    #[error("singular mapping matrix on face {0}")]
    SingularMapping(usize),
    #[error("edge ({0}, {1}) has more than two incident faces")]
    NonManifoldEdge(usize, usize),
    #[error("fine vertex {0} lies outside every coarse UV triangle")]
    UncoveredVertex(usize),
    #[error("coarse vertex {0} has no coincident fine vertex")]
    NoCoincidentVertex(usize),
    #[error("topology mismatch: {0}")]
    TopologyMismatch(String),
    #[error("shape mismatch in {what}: expected {expected}, got {got}")]
    ShapeMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("body proxy has no vertices")]
    EmptyBody,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("non-finite {what} at frame {frame}")]
    NonFinite { what: &'static str, frame: usize },
    #[error("checkpoint manifest mismatch: {0}")]
    Manifest(String),
    #[error("missing field weights for face {0}")]
    MissingField(usize),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Nnet(#[from] gdsr_nnet::NnetError),
}

impl CoreError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CoreError::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by non-finite numbers rather than bad input.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            CoreError::NonFinite { .. }
                | CoreError::Nnet(gdsr_nnet::NnetError::NonFiniteGradient(_))
        )
    }
}

pub type Result<T> = std::result::Result<T, CoreError>;
