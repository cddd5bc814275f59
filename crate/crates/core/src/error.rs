use std::path::PathBuf;

/// Errors produced anywhere in the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid field: {0}")]
    InvalidField(String),
    #[error("label {label} at voxel {index} is not below num_classes = {num_classes}")]
    InvalidLabel {
        label: u8,
        index: usize,
        num_classes: usize,
    },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("grid too small: every axis needs at least {min} voxels, got {dims:?}")]
    GridTooSmall { dims: [usize; 3], min: usize },
    #[error("grid {dims:?} exceeds the brute-force limit of {limit} voxels per axis")]
    GridTooLarge { dims: [usize; 3], limit: usize },
    #[error("distance transform source set is empty")]
    EmptySource,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid class weights: {0}")]
    InvalidWeights(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("empty sample")]
    EmptySample,
    #[error("degenerate phantom spec: {0}")]
    DegenerateSpec(String),
    #[error("boundary shift of {0} voxels empties a tumour class")]
    DegenerateShift(i32),
    #[error("feature config requires a mask channel but no mask was given")]
    MissingMask,
    #[error("training diverged at iteration {iteration} (loss = {loss})")]
    TrainingDiverged { iteration: usize, loss: f64 },
    #[error("format error: {0}")]
    Format(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
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

pub type Result<T, E = Error> = std::result::Result<T, E>;
