use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum MorlError {
    /// Inconsistent dimensions or invalid settings supplied by the caller.
    #[error("configuration error: {0}")]
    Config(String),

    /// A function was evaluated outside the region where it is defined,
    /// e.g. a scalarization applied to an unprojected return estimate.
    #[error("domain error: {0}")]
    Domain(String),

    /// The behaviour policy assigns zero probability to an action that
    /// appears in the trajectory.
    #[error("degenerate support at step {step}: behaviour probability is zero")]
    DegenerateSupport { step: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("enumeration needs {required} trajectory terms, budget is {budget}")]
    BudgetExceeded { required: u128, budget: u128 },

    #[error("integer overflow computing {0}")]
    Overflow(String),

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, MorlError>;
