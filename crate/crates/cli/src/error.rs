use thiserror::Error;

/// Failure classes, each with its own exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Unreadable or malformed input, or an invalid flag value.
    #[error("input error: {0}")]
    Input(String),
    /// The request is well-formed but cannot be carried out.
    #[error("infeasible: {0}")]
    Infeasible(String),
    /// A verification suite ran and some claim failed.
    #[error("claim failed: {}", .0.join(", "))]
    ClaimFailed(Vec<String>),
    #[error("output error: {0}")]
    Output(String),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::ClaimFailed(_) => 1,
            CliError::Input(_) => 2,
            CliError::Infeasible(_) | CliError::Output(_) => 3,
        }
    }
}

impl From<ensrlab::Error> for CliError {
    fn from(e: ensrlab::Error) -> Self {
        use ensrlab::Error as E;
        match e {
            E::InvalidAlphabet(_)
            | E::InvalidDistribution(_)
            | E::InvalidChannel(_)
            | E::DimensionMismatch(_)
            | E::InvalidArgument(_)
            | E::NotBiso(_) => CliError::Input(e.to_string()),
            E::Degenerate(_) | E::UnsupportedScope(_) | E::ResourceLimit(_) | E::Config(_) => {
                CliError::Infeasible(e.to_string())
            }
        }
    }
}
