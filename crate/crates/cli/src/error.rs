use std::fmt;

use reportsup::fitter::FitError;
use reportsup::grid::GridError;
use reportsup::loss::LossError;
use reportsup::phantom::PhantomError;
use reportsup::report::ParseError;
use reportsup::vgr::VgrError;

/// A failure with its stable exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Input(String),
    Dims(String),
    Gradcheck(String),
    Divergence(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Input(_) => 2,
            CliError::Dims(_) => 3,
            CliError::Gradcheck(_) => 4,
            CliError::Divergence(_) => 5,
        }
    }

    pub fn io(path: &std::path::Path, e: std::io::Error) -> Self {
        CliError::Input(format!("{}: {e}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage: {m}"),
            CliError::Input(m) => write!(f, "{m}"),
            CliError::Dims(m) => write!(f, "dims mismatch: {m}"),
            CliError::Gradcheck(m) => write!(f, "gradient check failed: {m}"),
            CliError::Divergence(m) => write!(f, "{m}"),
        }
    }
}

impl From<ParseError> for CliError {
    fn from(e: ParseError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<VgrError> for CliError {
    fn from(e: VgrError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<GridError> for CliError {
    fn from(e: GridError) -> Self {
        match e {
            GridError::DimsMismatch(m) => CliError::Dims(m),
            other => CliError::Input(other.to_string()),
        }
    }
}

impl From<LossError> for CliError {
    fn from(e: LossError) -> Self {
        match e {
            LossError::DimsMismatch(m) => CliError::Dims(m),
            other => CliError::Input(other.to_string()),
        }
    }
}

impl From<PhantomError> for CliError {
    fn from(e: PhantomError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<FitError> for CliError {
    fn from(e: FitError) -> Self {
        match e {
            FitError::DivergenceDetected { .. } => CliError::Divergence(e.to_string()),
            FitError::InvalidInput(m) => CliError::Usage(m),
            FitError::EmptySuite => CliError::Input(e.to_string()),
            FitError::Loss(l) => l.into(),
        }
    }
}
