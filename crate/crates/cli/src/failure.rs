use std::fmt;
use std::path::Path;
use std::process::ExitCode;

use endosim_core::bangbang::BangBangError;
use endosim_core::config::ConfigError;
use endosim_core::engine::EngineError;
use endosim_core::model::ModelError;
use endosim_core::phasegate::PhaseGateError;
use endosim_core::pulse::{ParseError, ProgramError};

/// Error classes and their exit codes: bad input 2, invariant violation 3,
/// anything else 1.
#[derive(Debug)]
pub enum Failure {
    Input(String),
    Invariant(String),
    Runtime(String),
}

impl Failure {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            Failure::Input(_) => 2,
            Failure::Invariant(_) => 3,
            Failure::Runtime(_) => 1,
        })
    }

    /// Prefix the message with a file path.
    pub fn in_file(self, path: &Path) -> Self {
        let p = path.display();
        match self {
            Failure::Input(m) => Failure::Input(format!("{p}: {m}")),
            Failure::Invariant(m) => Failure::Invariant(format!("{p}: {m}")),
            Failure::Runtime(m) => Failure::Runtime(format!("{p}: {m}")),
        }
    }

    pub fn input(msg: impl Into<String>) -> Self {
        Failure::Input(msg.into())
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Input(m) => write!(f, "error: {m}"),
            Failure::Invariant(m) => write!(f, "invariant violation: {m}"),
            Failure::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

impl From<ParseError> for Failure {
    fn from(e: ParseError) -> Self {
        Failure::Input(e.to_string())
    }
}

impl From<ProgramError> for Failure {
    fn from(e: ProgramError) -> Self {
        Failure::Input(e.to_string())
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Input(e.to_string())
    }
}

impl From<ModelError> for Failure {
    fn from(e: ModelError) -> Self {
        Failure::Input(e.to_string())
    }
}

impl From<EngineError> for Failure {
    fn from(e: EngineError) -> Self {
        if e.is_invariant_violation() {
            return Failure::Invariant(e.to_string());
        }
        match e {
            EngineError::InvalidConfig(_)
            | EngineError::Program(_)
            | EngineError::Model(_)
            | EngineError::Config(_)
            | EngineError::EmptyEnsemble => Failure::Input(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

impl From<PhaseGateError> for Failure {
    fn from(e: PhaseGateError) -> Self {
        match e {
            PhaseGateError::Engine(inner) => inner.into(),
            PhaseGateError::InvalidParam(_) | PhaseGateError::NoSolution { .. } => {
                Failure::Input(e.to_string())
            }
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

impl From<BangBangError> for Failure {
    fn from(e: BangBangError) -> Self {
        match e {
            BangBangError::Engine(inner) => inner.into(),
            BangBangError::Gate(inner) => inner.into(),
            _ => Failure::Input(e.to_string()),
        }
    }
}
