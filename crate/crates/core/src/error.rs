use thiserror::Error;

use crate::linalg::HermitianMatrix;
use crate::sdp::SdpPair;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("field mismatch between operands")]
    FieldMismatch,

    #[error("non-finite entry at ({0}, {1})")]
    NonFinite(usize, usize),

    #[error("matrix is not Hermitian: {0}")]
    NotHermitian(String),

    #[error("{what} did not converge after {iterations} iterations")]
    Convergence {
        what: &'static str,
        iterations: usize,
    },

    #[error("interior-point solver did not reach tolerance after {iterations} iterations (residual {residual:.3e})")]
    SolverStalled {
        iterations: usize,
        residual: f64,
        best: Box<SdpPair>,
    },

    #[error("problem detected as infeasible: {0}")]
    Infeasible(String),

    #[error("matrix is numerically zero")]
    ZeroMatrix,

    #[error("subspace has dimension {dim}, at least {required} required")]
    SubspaceTooSmall { dim: usize, required: usize },

    #[error("joint definiteness fails on the subspace")]
    HypothesisViolated { witness: Box<HermitianMatrix> },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("recovery step `{step}` failed: {detail}")]
    ProofStep { step: &'static str, detail: String },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn step(step: &'static str, detail: impl Into<String>) -> Self {
        Error::ProofStep {
            step,
            detail: detail.into(),
        }
    }
}
