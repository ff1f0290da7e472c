use lockbif::Error as CoreError;
use thiserror::Error;

/// Failure of a command, carrying its process exit code.
#[derive(Error, Debug)]
pub enum CliError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{failed} invariant check(s) failed")]
    Verify { failed: usize },
    #[error("{failed} of {total} branch job(s) failed")]
    Sweep { failed: usize, total: usize },
}

impl CliError {
    /// 2 solver failure, 3 invalid configuration, 4 degenerate ground state,
    /// 5 invariant violation in `verify`.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io { .. } => 3,
            CliError::Verify { .. } => 5,
            CliError::Sweep { .. } => 2,
            CliError::Core(e) => match e {
                CoreError::DegenerateGroundState { .. } => 4,
                CoreError::InvalidDomain(_)
                | CoreError::TooFewPoints(_)
                | CoreError::InvalidPotential(_)
                | CoreError::NonpositiveOperator(_)
                | CoreError::InvalidCoupling(_)
                | CoreError::InvalidPartition(_)
                | CoreError::NotPairPartition(_)
                | CoreError::InvalidOption(_)
                | CoreError::OutOfDomain { .. }
                | CoreError::Pole(_)
                | CoreError::AtBifurcation { .. } => 3,
                _ => 2,
            },
        }
    }
}
