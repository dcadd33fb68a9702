use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch at node {node} ({op}): {left:?} vs {right:?}")]
    ShapeMismatch {
        node: usize,
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("backward must be seeded from a 1x1 node, node {node} is {shape:?}")]
    NonScalarSeed { node: usize, shape: (usize, usize) },
    #[error("{what}: expected length {expected}, got {found}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("sigma must be strictly positive, got {0}")]
    InvalidSigma(f64),
    #[error("target value {value} at index {index} is outside [0, 1]")]
    InvalidTarget { index: usize, value: f64 },
    #[error("{0} is empty")]
    Empty(&'static str),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("index {index} out of range 0..{len}")]
    IndexOutOfRange { index: usize, len: usize },
}
