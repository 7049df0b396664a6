use gridhedge_core::Error;

/// Command failure, carrying its process exit code.
#[derive(Debug, thiserror::Error)]
pub enum Failure {
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Infeasible(String),
    #[error("{0}")]
    Precondition(String),
    #[error("{0}")]
    Empty(String),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 1,
            Failure::Input(_) => 2,
            Failure::Infeasible(_) => 3,
            Failure::Precondition(_) => 4,
            Failure::Empty(_) => 5,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::InfeasibleCalibration { .. } | Error::CalibrationDiverged { .. } => {
                Failure::Infeasible(msg)
            }
            Error::TimeOutOfRange { .. } => Failure::Precondition(format!("time out of range: {msg}")),
            Error::TreeTooLarge { .. } => Failure::Precondition(msg),
            Error::InsufficientPaths { .. } => Failure::Empty(msg),
            _ => Failure::Input(msg),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Input(e.to_string())
    }
}
