use seaice_core::data::DataError;
use seaice_core::metrics::MetricsError;
use seaice_core::train::TrainError;
use seaice_core::vit::VitError;
use thiserror::Error;

/// Command failure carrying its process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Input(String),
    #[error("stratified split failed: {0}")]
    Stratification(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Input(_) => 2,
            CliError::Stratification(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::Stratification { .. } => CliError::Stratification(e.to_string()),
            other => CliError::Input(other.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::NonFinite { .. } => CliError::Numerical(e.to_string()),
            TrainError::Data(d) => d.into(),
            other => CliError::Input(other.to_string()),
        }
    }
}

impl From<VitError> for CliError {
    fn from(e: VitError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        CliError::Input(e.to_string())
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

pub fn io_error(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::Input(format!("{}: {e}", path.display()))
}
