use std::fmt;

use lfrtune::analysis::AnalysisError;
use lfrtune::baseline::BaselineError;
use lfrtune::explore::ExploreError;
use lfrtune::io::IoError;
use lfrtune::lfr::LfrError;
use lfrtune::synthesis::SynthesisError;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    Parse,
    Infeasible,
    Numerical,
    CheckFailed,
}

impl ErrorKind {
    pub fn exit_code(self) -> u8 {
        match self {
            ErrorKind::Parse => 1,
            ErrorKind::Infeasible => 2,
            ErrorKind::Numerical => 3,
            ErrorKind::CheckFailed => 4,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
}

impl CliError {
    pub fn new(kind: ErrorKind, message: impl Into<String>) -> Self {
        Self { kind, message: message.into() }
    }

    pub fn parse(message: impl Into<String>) -> Self {
        Self::new(ErrorKind::Parse, message)
    }

    /// Machine-readable form written to standard error.
    pub fn to_json(&self) -> String {
        serde_json::json!({
            "error": self.kind,
            "exit_code": self.kind.exit_code(),
            "message": self.message,
        })
        .to_string()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}: {}", self.kind, self.message)
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        Self::parse(e.to_string())
    }
}

impl From<LfrError> for CliError {
    fn from(e: LfrError) -> Self {
        Self::parse(e.to_string())
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::Lfr(e) => e.into(),
            AnalysisError::Unstable { .. } | AnalysisError::UnstableSamples(_) => Self::parse(e.to_string()),
            AnalysisError::EigenFailure { .. } | AnalysisError::NonConvergence { .. } => {
                Self::new(ErrorKind::Numerical, e.to_string())
            }
        }
    }
}

impl From<SynthesisError> for CliError {
    fn from(e: SynthesisError) -> Self {
        match e {
            SynthesisError::Lfr(e) => e.into(),
            SynthesisError::Invalid(_) => Self::parse(e.to_string()),
            SynthesisError::Sdp(_) | SynthesisError::SolverFailure(_) => Self::new(ErrorKind::Numerical, e.to_string()),
        }
    }
}

impl From<ExploreError> for CliError {
    fn from(e: ExploreError) -> Self {
        match e {
            ExploreError::Lfr(e) => e.into(),
            ExploreError::Analysis(e) => e.into(),
            ExploreError::Partition(_) | ExploreError::SecretOutsideBox { .. } | ExploreError::Config(_) => {
                Self::parse(e.to_string())
            }
        }
    }
}

impl From<BaselineError> for CliError {
    fn from(e: BaselineError) -> Self {
        match e {
            BaselineError::Explore(e) => e.into(),
            BaselineError::Synthesis(e) => e.into(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::parse(e.to_string())
    }
}
