use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("malformed PGM: {0}")]
    MalformedPgm(String),

    #[error("malformed checkpoint: {0}")]
    MalformedCheckpoint(String),

    #[error("centroid undefined: image has no foreground after background subtraction")]
    EmptyForeground,

    #[error("cannot sample {wanted} {kind} patches: {reason}")]
    ImpossibleBalance {
        wanted: usize,
        kind: &'static str,
        reason: String,
    },

    #[error("training set contains a single class")]
    SingleClass,

    #[error("episode already finished")]
    EpisodeFinished,

    #[error("empty trajectory")]
    EmptyTrajectory,

    #[error("non-finite {0}")]
    NonFinite(&'static str),

    #[error("insufficient boundary points: {0} (need at least 3)")]
    InsufficientBoundaryPoints(usize),

    #[error("all {0} boundary points were rejected as outliers")]
    AllPointsRejected(usize),

    #[error("no episode terminated on the boundary")]
    NoSuccessfulEpisodes,

    #[error("t-test undefined: both samples have zero variance and equal means")]
    ZeroVariance,

    #[error("sample too small: {0} values (need at least 2)")]
    SampleTooSmall(usize),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidConfig(msg.into())
}
