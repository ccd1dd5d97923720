use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by tensor construction and differentiable ops.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("{op}: shape mismatch between {left:?} and {right:?}")]
    ShapeMismatch { op: &'static str, left: Vec<usize>, right: Vec<usize> },
    #[error("{op}: expected rank {expected}, got shape {shape:?}")]
    Rank { op: &'static str, expected: usize, shape: Vec<usize> },
    #[error("invalid shape {shape:?}: every extent must be at least 1")]
    InvalidShape { shape: Vec<usize> },
    #[error("shape {shape:?} needs {} values, got {len}", shape.iter().product::<usize>())]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("{op}: produced a non-finite value")]
    NonFinite { op: &'static str },
    #[error("backward requires a scalar loss, got shape {shape:?}")]
    NonScalar { shape: Vec<usize> },
    #[error("{0}")]
    Invalid(String),
}

/// Crate-level error.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("config: {0}")]
    Config(String),
    #[error("{component} loss is not finite ({value})")]
    NonFiniteLoss { component: &'static str, value: f64 },
    #[error("{component}: {source}")]
    InComponent {
        component: &'static str,
        #[source]
        source: TensorError,
    },
    #[error("shared encoder layer {layer} is not aliased between the two generators")]
    SharingViolation { layer: usize },
    #[error("{0} update changed parameters outside its own networks")]
    PhaseViolation(&'static str),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("dataset: missing file {path} for record {record}")]
    MissingFile { path: PathBuf, record: usize },
    #[error("dataset: {0}")]
    Dataset(String),
    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("image error at {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Attaches a component name to tensor errors inside the loss assembly.
pub(crate) trait InComponent<V> {
    fn in_component(self, component: &'static str) -> Result<V>;
}

impl<V> InComponent<V> for std::result::Result<V, TensorError> {
    fn in_component(self, component: &'static str) -> Result<V> {
        self.map_err(|source| Error::InComponent { component, source })
    }
}
