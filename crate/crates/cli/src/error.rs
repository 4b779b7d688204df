use std::path::Path;

use kfat::evaluation::EvaluationError;
use kfat::ga::GaError;
use kfat::scenario::ScenarioError;
use kfat::tsbo::TsboError;
use kfat::tuning::BoxedError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Io { .. } | CliError::Data(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }

    pub fn io(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
        move |source| CliError::Io { path: path.display().to_string(), source }
    }
}

impl From<ScenarioError> for CliError {
    fn from(e: ScenarioError) -> Self {
        match e {
            ScenarioError::Config(_) => CliError::Usage(e.to_string()),
            ScenarioError::Simulation { .. } => CliError::Numerical(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<EvaluationError> for CliError {
    fn from(e: EvaluationError) -> Self {
        match e {
            EvaluationError::Filter { .. } => CliError::Numerical(e.to_string()),
            EvaluationError::InvalidWeights(_) => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

fn objective_failure(source: &BoxedError, message: String) -> CliError {
    match source.downcast_ref::<EvaluationError>() {
        Some(EvaluationError::Filter { .. }) | None => CliError::Numerical(message),
        Some(_) => CliError::Data(message),
    }
}

impl From<TsboError> for CliError {
    fn from(e: TsboError) -> Self {
        match e {
            TsboError::Config(_) | TsboError::Space(_) | TsboError::OutOfBounds { .. } => CliError::Usage(e.to_string()),
            TsboError::DegenerateShrink(_) | TsboError::Surrogate(_) => CliError::Numerical(e.to_string()),
            TsboError::Objective(ref f) => objective_failure(&f.source, e.to_string()),
        }
    }
}

impl From<GaError> for CliError {
    fn from(e: GaError) -> Self {
        match e {
            GaError::Config(_) => CliError::Usage(e.to_string()),
            GaError::Objective(ref f) => objective_failure(&f.source, e.to_string()),
        }
    }
}
