use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("invalid tensor: {0}")]
    InvalidTensor(String),

    #[error("division guard in {op}: denominator magnitude {value:e} < 1e-12")]
    DivisionByZero { op: &'static str, value: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("empty batch passed to {0}")]
    EmptyBatch(&'static str),

    #[error("latent gap {gap:e} below minimum {min_gap:e}; resample z2")]
    LatentGap { gap: f64, min_gap: f64 },

    #[error("could not draw a latent pair with gap >= {min_gap:e} after {attempts} attempts")]
    ResampleExhausted { min_gap: f64, attempts: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("training diverged at step {step}: {reason}")]
    Diverged { step: u64, reason: String },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        Error::Shape {
            op,
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        }
    }
}
