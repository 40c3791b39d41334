use std::fmt;
use std::path::Path;

use nn_sensitivity::data::DataError;
use nn_sensitivity::engine::EngineError;
use nn_sensitivity::explain::ExplainError;
use nn_sensitivity::models::ModelError;
use nn_sensitivity::training::TrainError;
use nn_sensitivity::validation::ValidationError;

/// Exit status classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// A computation failed or a check did not pass (exit 1).
    Numeric,
    /// Bad arguments, unreadable or malformed inputs, unwritable outputs (exit 2).
    Usage,
}

#[derive(Debug)]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            kind: ErrorKind::Usage,
            message: message.into(),
        }
    }

    pub fn numeric(message: impl Into<String>) -> Self {
        Self {
            kind: ErrorKind::Numeric,
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind {
            ErrorKind::Numeric => 1,
            ErrorKind::Usage => 2,
        }
    }

    /// Prefixes the message, keeping the kind.
    pub fn context(self, what: impl fmt::Display) -> Self {
        Self {
            kind: self.kind,
            message: format!("{what}: {}", self.message),
        }
    }

    pub fn io(path: &Path, err: std::io::Error) -> Self {
        Self::usage(format!("{}: {err}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

pub type CliResult<T> = Result<T, CliError>;

fn engine_kind(e: &EngineError) -> ErrorKind {
    match e {
        EngineError::NonFinite(_) => ErrorKind::Numeric,
        _ => ErrorKind::Usage,
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        Self::usage(e.to_string())
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        Self::usage(e.to_string())
    }
}

impl From<EngineError> for CliError {
    fn from(e: EngineError) -> Self {
        Self {
            kind: engine_kind(&e),
            message: e.to_string(),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        let kind = match &e {
            TrainError::Config(_) | TrainError::TargetMismatch { .. } | TrainError::NoTrainingRows => ErrorKind::Usage,
            TrainError::Diverged { .. } => ErrorKind::Numeric,
            TrainError::Engine(inner) => engine_kind(inner),
        };
        Self {
            kind,
            message: e.to_string(),
        }
    }
}

fn explain_kind(e: &ExplainError) -> ErrorKind {
    match e {
        ExplainError::Insensitive { .. } => ErrorKind::Numeric,
        ExplainError::Engine(inner) => engine_kind(inner),
        _ => ErrorKind::Usage,
    }
}

impl From<ExplainError> for CliError {
    fn from(e: ExplainError) -> Self {
        Self {
            kind: explain_kind(&e),
            message: e.to_string(),
        }
    }
}

impl From<ValidationError> for CliError {
    fn from(e: ValidationError) -> Self {
        let kind = match &e {
            ValidationError::NotBinary
            | ValidationError::NoRows
            | ValidationError::TooLarge(_)
            | ValidationError::TooFewDraws { .. } => ErrorKind::Usage,
            ValidationError::Explain(inner) => explain_kind(inner),
            _ => ErrorKind::Numeric,
        };
        Self {
            kind,
            message: e.to_string(),
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        Self::usage(format!("json: {e}"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_kind() {
        let insensitive = CliError::from(ExplainError::Insensitive { normalizer: 0.0 });
        assert_eq!(insensitive.exit_code(), 1);
        assert!(insensitive.message.contains("normalizer is 0"));
        assert_eq!(CliError::from(ExplainError::Threshold(120.0)).exit_code(), 2);
        assert_eq!(CliError::from(DataError::EmptyFile).exit_code(), 2);
        let diverged = CliError::from(TrainError::Diverged {
            epoch: 1,
            learning_rate: 1.0,
        });
        assert_eq!(diverged.exit_code(), 1);
        assert_eq!(CliError::usage("x").context("reading").message, "reading: x");
    }
}
