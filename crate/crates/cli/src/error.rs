use std::fmt;

use mmstab::analysis::AnalysisError;
use mmstab::chain::ChainError;
use mmstab::lab::LabError;
use mmstab::net::NetError;
use mmstab::regen::RegenError;

pub const EXIT_OTHER: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_INFEASIBLE: u8 = 3;
pub const EXIT_INVARIANT: u8 = 4;

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Infeasible(String),
    Invariant(String),
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Infeasible(_) => EXIT_INFEASIBLE,
            CliError::Invariant(_) => EXIT_INVARIANT,
            CliError::Other(_) => EXIT_OTHER,
        }
    }

    pub fn io(path: &std::path::Path, e: impl fmt::Display) -> Self {
        CliError::Other(format!("{}: {e}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Infeasible(m) => write!(f, "infeasible: {m}"),
            CliError::Invariant(m) => write!(f, "invariant breach: {m}"),
            CliError::Other(m) => f.write_str(m),
        }
    }
}

impl From<NetError> for CliError {
    fn from(e: NetError) -> Self {
        match e {
            NetError::InvalidConfig(_) | NetError::Unsupported(_) | NetError::BudgetExceeded { .. } => {
                CliError::Config(e.to_string())
            }
            NetError::InvariantBreach(_) => CliError::Invariant(e.to_string()),
            NetError::Analysis(a) => a.into(),
            NetError::Io(_) => CliError::Other(e.to_string()),
        }
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::Io(_) | AnalysisError::Numerical(_) => CliError::Other(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<ChainError> for CliError {
    fn from(e: ChainError) -> Self {
        match e {
            ChainError::InvalidState(_) => CliError::Invariant(e.to_string()),
            ChainError::InvalidRequest(_) => CliError::Config(e.to_string()),
        }
    }
}

impl From<LabError> for CliError {
    fn from(e: LabError) -> Self {
        match e {
            LabError::Net(n) => n.into(),
            LabError::Chain(c) => c.into(),
            LabError::InvalidArgument(_) => CliError::Config(e.to_string()),
            LabError::Bracket(_) | LabError::Io(_) => CliError::Other(e.to_string()),
        }
    }
}

impl From<RegenError> for CliError {
    fn from(e: RegenError) -> Self {
        match e {
            RegenError::Analysis(a) => a.into(),
            RegenError::InvalidArgument(_) => CliError::Config(e.to_string()),
            RegenError::NoMinorization => CliError::Other(e.to_string()),
        }
    }
}
