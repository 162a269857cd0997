use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeomError {
    #[error("box parameters must be finite")]
    NonFinite,
    #[error("box extents must be positive, got {0:?}")]
    NonPositiveSize([f64; 3]),
    #[error("yaw {0} outside (-pi, pi]")]
    YawOutOfRange(f64),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AugmentError {
    #[error("point {index} lies outside the box being scaled")]
    PointOutsideBox { index: usize },
    #[error("invalid scale range [{lo}, {hi}]")]
    InvalidRange { lo: f64, hi: f64 },
    #[error("scale factors must be positive, got {0:?}")]
    NonPositiveFactor([f64; 3]),
    #[error("stage {stage} outside 1..={stages}")]
    StageOutOfRange { stage: usize, stages: usize },
    #[error("no augmentation at index {0}")]
    UnknownAugmentation(usize),
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MemoryError {
    #[error("proxy labels for scene {proxies:?} cannot update memory of scene {memory:?}")]
    SceneMismatch { memory: String, proxies: String },
    #[error("invalid ensemble config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NormError {
    #[error("running statistics for the {0} domain are not initialized")]
    Uninitialized(&'static str),
    #[error("expected {expected} channels, got {got}")]
    ChannelMismatch { expected: usize, got: usize },
    #[error("invalid normalization state: {0}")]
    InvalidState(String),
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("could not place object {object} in scene {scene} after {tries} attempts")]
    InfeasiblePlacement {
        scene: String,
        object: usize,
        tries: usize,
    },
    #[error("invalid scene spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Geom(#[from] GeomError),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Geom(#[from] GeomError),
    #[error(transparent)]
    Augment(#[from] AugmentError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error(transparent)]
    Norm(#[from] NormError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("config error: {0}")]
    Config(String),
    #[error("data error in {path}: {msg}")]
    Data { path: PathBuf, msg: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn data(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Data {
            path: path.into(),
            msg: msg.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
