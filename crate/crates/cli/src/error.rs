use std::fmt;
use std::io;
use std::path::PathBuf;

use remmpc_core::Error as CoreError;

use crate::scenario_file::ScenarioError;

/// Process exit codes.
pub mod exit {
    pub const SUCCESS: u8 = 0;
    pub const VALIDATION: u8 = 1;
    pub const SOLVER: u8 = 2;
    pub const USAGE: u8 = 64;
}

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or flag values.
    Usage(String),
    Scenario(ScenarioError),
    /// One or more assumption checks failed.
    Checks(Vec<String>),
    /// A core error raised while preparing or validating inputs.
    Invalid(CoreError),
    Solver {
        context: String,
        source: CoreError,
    },
    Io {
        path: PathBuf,
        source: io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => exit::USAGE,
            CliError::Solver { .. } => exit::SOLVER,
            CliError::Scenario(_)
            | CliError::Checks(_)
            | CliError::Invalid(_)
            | CliError::Io { .. } => exit::VALIDATION,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// Sorts a core error raised during a run into input problems and solver failures.
    pub fn from_run(context: impl Into<String>, source: CoreError) -> Self {
        if is_input_error(&source) {
            CliError::Invalid(source)
        } else {
            CliError::Solver {
                context: context.into(),
                source,
            }
        }
    }
}

fn is_input_error(e: &CoreError) -> bool {
    match e {
        CoreError::InvalidParameter(_)
        | CoreError::DimensionMismatch { .. }
        | CoreError::LengthMismatch { .. }
        | CoreError::NonFinite { .. }
        | CoreError::NotSymmetric { .. }
        | CoreError::EmptyBox { .. }
        | CoreError::AssumptionViolated(_)
        | CoreError::CertificationFailed(_) => true,
        CoreError::StepFailed { source, .. } => is_input_error(source),
        _ => false,
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "usage error: {msg}"),
            CliError::Scenario(e) => write!(f, "{e}"),
            CliError::Checks(failed) => {
                write!(f, "assumption checks failed: {}", failed.join("; "))
            }
            CliError::Invalid(e) => write!(f, "invalid input: {e}"),
            CliError::Solver { context, source } => write!(f, "{context}: {source}"),
            CliError::Io { path, source } => write!(f, "{}: {source}", path.display()),
        }
    }
}

impl std::error::Error for CliError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            CliError::Scenario(e) => Some(e),
            CliError::Invalid(e) | CliError::Solver { source: e, .. } => Some(e),
            CliError::Io { source, .. } => Some(source),
            _ => None,
        }
    }
}

impl From<ScenarioError> for CliError {
    fn from(e: ScenarioError) -> Self {
        CliError::Scenario(e)
    }
}

pub type CliResult<T> = Result<T, CliError>;
