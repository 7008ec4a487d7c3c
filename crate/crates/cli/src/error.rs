use mmsa_core::audio::AudioError;
use mmsa_core::checkpoint::CheckpointError;
use mmsa_core::data::DataError;
use mmsa_core::model::ModelError;
use mmsa_core::optim::{OptimError, TrainError};

/// A failure with its process exit code: 2 config, 3 data, 4 numeric.
#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    Config(String),
    Data(String),
    Numeric(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Data(m) | CliError::Numeric(m) => m,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let kind = match self {
            CliError::Config(_) => "config error",
            CliError::Data(_) => "data error",
            CliError::Numeric(_) => "numeric failure",
        };
        write!(f, "{kind}: {}", self.message())
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<AudioError> for CliError {
    fn from(e: AudioError) -> Self {
        match e {
            AudioError::Config(_) | AudioError::BadSize { .. } => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Config(_) => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Config(_) => CliError::Config(e.to_string()),
            TrainError::EmptyDataset
            | TrainError::Sample { .. }
            | TrainError::Optim(OptimError::ShapeMismatch(_)) => CliError::Data(e.to_string()),
            TrainError::NonFiniteLoss { .. }
            | TrainError::Optim(OptimError::NonFiniteGradient(_))
            | TrainError::Metric(_) => CliError::Numeric(e.to_string()),
        }
    }
}

impl From<OptimError> for CliError {
    fn from(e: OptimError) -> Self {
        TrainError::from(e).into()
    }
}
