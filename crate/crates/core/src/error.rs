use alloc::boxed::Box;
use alloc::string::String;

use crate::data_model::SubregionId;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("label value {value} is not one of 0, 1, 2, 4 ({count} voxels)")]
    InvalidLabel { value: i64, count: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("volume depth {depth} leaves no slices after dropping the last {dropped}")]
    EmptyDataset { depth: usize, dropped: usize },
    #[error("at least 2 cases are required, got {0}")]
    TooFewCases(usize),
    #[error("incompatible weights: {0}")]
    IncompatibleWeights(String),
    #[error("training diverged (non-finite loss) in epoch {epoch}")]
    TrainingDiverged { epoch: usize },
    #[error("stage {region}: {source}")]
    Stage {
        region: SubregionId,
        #[source]
        source: Box<Error>,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("empty input")]
    EmptyInput,
    #[error("brain mask is empty")]
    EmptyBrainMask,
    #[error("region mask is empty")]
    EmptyRegion,
    #[error("at least {min} samples are required, got {got}")]
    TooFewSamples { min: usize, got: usize },
    #[error("feature {index} is not finite")]
    InvalidFeature { index: usize },
    #[error("feature schema mismatch: model expects {expected}, got {got}")]
    FeatureSchemaMismatch { expected: String, got: String },
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }
}
