use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("invalid configuration: {0}")]
    Validation(String),
    #[error("numerical consistency failure: {0}")]
    Numerical(String),
    #[error(transparent)]
    Core(#[from] sympwalk_core::Error),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type LabResult<T> = Result<T, LabError>;

impl LabError {
    /// Process exit code: 2 for validation errors, 3 for numerical
    /// consistency failures, 1 for anything else.
    pub fn exit_code(&self) -> i32 {
        use sympwalk_core::Error as E;
        match self {
            LabError::Validation(_) | LabError::Core(E::InvalidParams(_) | E::Dimension(_)) => 2,
            LabError::Numerical(_) | LabError::Core(_) => 3,
            _ => 1,
        }
    }
}
