use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("invalid shape in {op}: {msg}")]
    InvalidShape { op: &'static str, msg: String },

    #[error("invalid layer spec `{spec}`: {msg}")]
    LayerSpec { spec: String, msg: String },

    #[error("domain error in {op}: {msg}")]
    Domain { op: &'static str, msg: String },

    #[error("batch norm in train mode needs at least 2 samples per feature, got {0}")]
    BatchTooSmall(usize),

    #[error("backward needs a scalar root, got shape {0:?}")]
    NonScalarRoot(Vec<usize>),

    #[error("non-finite gradient for parameter `{0}`")]
    NonFiniteGradient(String),

    #[error("non-finite loss {loss} at stage {stage}, epoch {epoch}, step {step}")]
    NonFiniteLoss {
        loss: f64,
        stage: usize,
        epoch: usize,
        step: usize,
    },

    #[error("non-finite simulator state at step {0}")]
    NonFiniteState(usize),

    #[error("could not place {objects} objects without overlap after {attempts} attempts")]
    Placement { objects: usize, attempts: usize },

    #[error("graph error: {0}")]
    Graph(String),

    #[error("model/data mismatch: {0}")]
    Schema(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("horizon {horizon} from start {start} exceeds episode length {len}")]
    Horizon {
        start: usize,
        horizon: usize,
        len: usize,
    },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("malformed {what} file {path}: {msg}")]
    Format {
        what: &'static str,
        path: PathBuf,
        msg: String,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn shape(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        Error::Shape {
            op,
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        }
    }

    pub(crate) fn invalid(op: &'static str, msg: impl Into<String>) -> Self {
        Error::InvalidShape {
            op,
            msg: msg.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
