use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch between {left:?} and {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("data length {len} does not match shape {shape:?}")]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("{op}: axis {axis} is invalid for shape {shape:?}")]
    InvalidAxis {
        op: &'static str,
        axis: usize,
        shape: Vec<usize>,
    },
    #[error("maxpool2d: spatial extents {height}x{width} must be even")]
    OddExtent { height: usize, width: usize },
    #[error("conv2d: input has {input} channels but kernels expect {kernel}")]
    ChannelMismatch { input: usize, kernel: usize },
    #[error("conv2d: kernel extents {0}x{1} must be odd")]
    EvenKernel(usize, usize),
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("gradient requested for a tensor that does not require grad")]
    Detached,
    #[error("variable belongs to a different tape")]
    ForeignVar,
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("loss component `{0}` is not available for this variant")]
    MissingComponent(&'static str),
    #[error("variant `{0}` has no attention map")]
    NoAttention(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("{path}: {msg}")]
    Image { path: PathBuf, msg: String },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("class count mismatch: model has {model} classes, data needs {data}")]
    ClassCount { model: usize, data: usize },
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }
}
