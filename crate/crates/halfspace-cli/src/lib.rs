//! Deterministic command-line front end for the `halfspace` library.
//!
//! The binary reads one strict-JSON configuration file, dispatches to the
//! requested task, and writes machine-readable artifacts (JSON reports and
//! CSV tables) atomically.  Identical configuration and seed produce
//! byte-identical artifacts.
//!
//! Exit-code contract: `0` success, `1` a numerical verdict or residual
//! threshold failed, `2` configuration or usage error.

pub mod config;
pub mod ingest;
pub mod runner;

/// A failed run: carries the process exit code and a human-readable message.
#[derive(Debug)]
pub struct Failure {
    pub exit_code: i32,
    pub message: String,
}

impl Failure {
    /// Configuration / validation problem (exit 2).
    pub fn config(message: impl Into<String>) -> Self {
        Self { exit_code: 2, message: message.into() }
    }

    /// Numerical failure during task execution (exit 1).
    pub fn numerical(message: impl Into<String>) -> Self {
        Self { exit_code: 1, message: message.into() }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.message)
    }
}

impl From<halfspace::Error> for Failure {
    fn from(e: halfspace::Error) -> Self {
        use halfspace::Error::*;
        // Residual-type failures mean the mathematics rejected the input;
        // everything else is a malformed or inadmissible configuration.
        let exit_code = match e {
            FactorizationResidual { .. }
            | QuadratureNonConvergence { .. }
            | BranchCut { .. }
            | NotDistinguished { .. }
            | SingularSymbol { .. } => 1,
            _ => 2,
        };
        Failure { exit_code, message: e.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::config(format!("i/o error: {e}"))
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::config(format!("config error: {e}"))
    }
}
