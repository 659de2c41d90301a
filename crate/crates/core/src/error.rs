use std::path::PathBuf;

use crate::projection::ProjectionKind;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("layer {layer} has no {kind} projection")]
    MissingProjection { layer: usize, kind: ProjectionKind },

    #[error("{kind} projection shape {found:?} in layer {layer} differs from {expected:?}")]
    ShapeMismatch {
        kind: ProjectionKind,
        layer: usize,
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("cannot read {path}: {reason}")]
    UnreadableFile { path: PathBuf, reason: String },

    #[error("i/o failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("rank {rank} exceeds the smallest matrix dimension {max}")]
    RankTooLarge { rank: usize, max: usize },

    #[error("matrix contains non-finite values")]
    NonFinite,

    #[error("vector has zero norm")]
    ZeroNorm,

    #[error("vector lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("singular-value ranks differ: {0} vs {1}")]
    RankMismatch(usize, usize),

    #[error("need at least {required} samples, got {found}")]
    TooFewSamples { required: usize, found: usize },

    #[error("samples are degenerate (all values equal)")]
    DegenerateSamples,

    #[error("duplicate tensor name {0:?}")]
    DuplicateName(String),

    #[error("invalid tensor: {0}")]
    InvalidTensor(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("characteristic table does not cover {0}")]
    IncompleteTable(String),

    #[error("shape error: {0}")]
    ShapeError(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
