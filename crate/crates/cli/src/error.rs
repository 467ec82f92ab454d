use std::path::PathBuf;

use resgin::data::DataError;
use resgin::diffcore::DiffError;
use resgin::eval::experiments::ExperimentError;
use resgin::eval::EvalError;
use resgin::model::ModelError;
use resgin::train::TrainError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error("data: {0}")]
    Data(#[from] DataError),
    #[error("data: {0}")]
    DataShape(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 2,
            CliError::Data(_) | CliError::DataShape(_) | CliError::Checkpoint(_) | CliError::Io { .. } => 3,
            CliError::Numeric(_) => 4,
        }
    }

    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }
}

fn is_numeric(e: &DiffError) -> bool {
    matches!(e, DiffError::NonFinite { .. })
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Numeric(d) if is_numeric(&d) => CliError::Numeric(d.to_string()),
            ModelError::InvalidConfig(m) => CliError::Config(m),
            ModelError::DimensionMismatch { .. } => CliError::DataShape(e.to_string()),
            ModelError::UnknownVariant(_) => CliError::Config(e.to_string()),
            other => CliError::Checkpoint(other.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        CliError::Numeric(e.to_string())
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::InvalidConfig(m) => CliError::Config(m),
            TrainError::Data(d) => CliError::Data(d),
            TrainError::Eval(ev) => ev.into(),
            TrainError::Model(m) => m.into(),
            TrainError::NonFiniteLoss { .. } | TrainError::ShapeMismatch { .. } | TrainError::EmptyBatch | TrainError::LengthMismatch { .. } => {
                CliError::Numeric(e.to_string())
            }
        }
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::EmptyGrid(g) => CliError::Usage(format!("empty grid: {g}")),
            ExperimentError::Train(t) => t.into(),
            ExperimentError::Model(m) => m.into(),
            ExperimentError::Data(d) => d.into(),
            ExperimentError::Io(source) => CliError::Io {
                path: PathBuf::from("<results>"),
                source,
            },
            ExperimentError::Csv(c) => CliError::Io {
                path: PathBuf::from("<results>"),
                source: std::io::Error::other(c.to_string()),
            },
        }
    }
}
