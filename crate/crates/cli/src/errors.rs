//! Error-to-exit-code mapping: 0 success, 2 infeasible instance,
//! 64 usage error, 65 malformed input file, 1 anything else.

use std::fmt;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or missing required arguments (exit 64).
    Usage(String),
    /// Unreadable or invalid input file (exit 65).
    Input(String),
    /// The instance cannot be solved (exit 2).
    Infeasible(String),
    /// Verification failure or output error (exit 1).
    Failure(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 64,
            CliError::Input(_) => 65,
            CliError::Infeasible(_) => 2,
            CliError::Failure(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Input(m) => write!(f, "malformed input: {m}"),
            CliError::Infeasible(m) => write!(f, "infeasible instance: {m}"),
            CliError::Failure(m) => write!(f, "{m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<flmarket_core::Error> for CliError {
    fn from(e: flmarket_core::Error) -> Self {
        use flmarket_core::Error::*;
        match e {
            InfeasibleClient { .. }
            | InfeasibleCoalition(_)
            | EmptyCoalition
            | NoCandidates(_)
            | NoUniformPrice
            | LatencyDomain { .. } => CliError::Infeasible(e.to_string()),
            InvalidProfile { .. }
            | InvalidConfig(_)
            | InvalidOptions(_)
            | NonPositiveFrequency(_)
            | NonPositivePrice(_) => CliError::Input(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Failure(format!("i/o error: {e}"))
    }
}
