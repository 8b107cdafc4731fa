use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ZkError {
    #[error("zero has no multiplicative inverse")]
    ZeroInverse,
    #[error("assertion violated at gate {gate}")]
    AssertionViolated { gate: usize },
    #[error("arity mismatch: expected {expected} {what}, got {actual}")]
    ArityMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("invalid circuit: {0}")]
    InvalidCircuit(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("accumulator bound {bound} exceeds gadget limit {limit} in layer {layer}")]
    RangeOverflow { layer: usize, bound: u64, limit: u64 },
    #[error("witness does not satisfy the statement")]
    WitnessMismatch,
    #[error("malformed proof: {0}")]
    MalformedProof(String),
    #[error("malformed key: {0}")]
    MalformedKey(String),
    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("lookup table is empty")]
    EmptyTable,
    #[error("nothing to commit to")]
    EmptyInput,
    #[error("repetition count must be positive")]
    ZeroRepetitions,
}

pub type Result<T, E = ZkError> = std::result::Result<T, E>;
