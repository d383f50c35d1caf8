use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Error, Debug)]
pub enum GmsError {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("matrix is singular or ill-conditioned (condition estimate {cond:.3e}) in {context}")]
    IllConditioned { context: String, cond: f64 },

    #[error("partition node ({n},{k}) violates the contraction bound: max child width {child:.6e} >= rho * {parent:.6e}")]
    Partition {
        n: u32,
        k: u64,
        child: f64,
        parent: f64,
    },

    #[error("degenerate support at node ({n},{k}): {reason}")]
    Degenerate { n: u32, k: u64, reason: String },

    #[error("value out of range: {0}")]
    Range(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("model pairing rejected: {0}")]
    Pairing(String),

    #[error("model is not differentiable: {0}")]
    NotDifferentiable(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, GmsError>;
