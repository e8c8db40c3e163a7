use alloc::string::String;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DatasetError {
    #[error("empty manifest")]
    EmptyManifest,
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
    #[error("insufficient images: requested {requested}, usable {usable}")]
    InsufficientImages { requested: usize, usable: usize },
    #[error("predefined split index {index} out of range for {len} images")]
    SplitIndexOutOfRange { index: usize, len: usize },
    #[error("invalid image record `{0}`: width and height must be positive")]
    InvalidDimensions(String),
    #[error("split references dataset `{found}`, expected `{expected}`")]
    DatasetMismatch { expected: String, found: String },
    #[error("image `{0}` could not be loaded")]
    Load(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TransformError {
    #[error("unknown corruption kind `{0}`")]
    UnknownKind(String),
    #[error("corruption parameter must be positive, got {0}")]
    NonPositiveParameter(f32),
    #[error("image must have 3 channels and positive size")]
    BadImage,
    #[error("batch inputs and labels differ in length ({inputs} vs {labels})")]
    BatchMismatch { inputs: usize, labels: usize },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("backend `{0}` is not available")]
    BackendUnavailable(String),
    #[error("num_classes must be at least 2, got {0}")]
    TooFewClasses(usize),
    #[error("layer index {index} out of range (model has {layers} layers)")]
    LayerOutOfRange { index: usize, layers: usize },
    #[error("parameter buffer has {found} values, expected {expected}")]
    ParameterCount { expected: usize, found: usize },
    #[error("invalid model multiplier {0}")]
    BadMultiplier(f32),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrainError {
    #[error("need at least 2 classes, got {0}")]
    TooFewClasses(usize),
    #[error("class {0} has no training images")]
    EmptyClass(usize),
    #[error("empty validation set")]
    EmptyValidation,
    #[error("checkpoint predicts {model} classes but {splits} splits were given")]
    ClassMismatch { model: usize, splits: usize },
    #[error("only {elapsed} of {budget} iterations elapsed; need at least 10%")]
    TooEarly { elapsed: usize, budget: usize },
    #[error("invalid training config: {0}")]
    Config(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProbeError {
    #[error("feature rows ({rows}) and labels ({labels}) differ")]
    LabelMismatch { rows: usize, labels: usize },
    #[error("feature dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("empty feature set")]
    Empty,
    #[error("empty probe sweep")]
    EmptySweep,
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StudyError {
    #[error("insufficient validation images for dataset `{dataset}`: need {need}, have {have}")]
    InsufficientImages { dataset: String, need: usize, have: usize },
    #[error("question `{0}` already answered")]
    DuplicateAnswer(String),
    #[error("unknown image `{0}`")]
    UnknownImage(String),
    #[error("invalid choice `{0}`")]
    InvalidChoice(String),
    #[error("session is not active")]
    NotActive,
    #[error("session is not completed")]
    NotCompleted,
    #[error("no completed sessions")]
    NoSessions,
    #[error("study needs at least 2 datasets")]
    TooFewDatasets,
}
