use thiserror::Error;

/// Errors produced by the coupling library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum CouplingError {
    #[error("distribution must have at least one entry")]
    Empty,
    #[error("weight at index {index} is {value}; weights must be finite and non-negative")]
    InvalidWeight { index: usize, value: f64 },
    #[error("all weights are zero")]
    AllZero,
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("epsilon must lie in (0, 1), got {0}")]
    InvalidEpsilon(f64),
    #[error("invalid grid distribution: {0}")]
    InvalidGrid(String),
    #[error("grid denominators differ: {left} vs {right}")]
    DenominatorMismatch { left: u64, right: u64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("sampling scan exceeded {cap} draws; input is pathological")]
    ScanCapExceeded { cap: u64 },
    #[error("protocol violation: {0}")]
    ProtocolViolation(String),
    #[error("transcript is incomplete")]
    IncompleteTranscript,
    #[error("token {token} out of range for vocabulary of size {vocab}")]
    TokenOutOfRange { token: usize, vocab: usize },
    #[error("vocabulary sizes differ: {left} vs {right}")]
    VocabMismatch { left: usize, right: usize },
    #[error("acceptance report needs a drafted run")]
    NoDrafter,
    #[error("invariant violated: {0}")]
    InvariantViolation(String),
}

impl CouplingError {
    /// True for failures raised while a protocol was running (as opposed to
    /// rejected inputs).
    pub fn is_protocol_failure(&self) -> bool {
        matches!(
            self,
            CouplingError::ScanCapExceeded { .. }
                | CouplingError::ProtocolViolation(_)
                | CouplingError::IncompleteTranscript
                | CouplingError::InvariantViolation(_)
        )
    }
}

pub type Result<T, E = CouplingError> = std::result::Result<T, E>;
