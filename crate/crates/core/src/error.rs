use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("invalid tensor: shape {shape:?} needs {expected} values, got {got}")]
    InvalidTensor {
        shape: Vec<usize>,
        expected: usize,
        got: usize,
    },
    #[error("backward needs a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("temperature must be positive, got {0}")]
    InvalidTemperature(f64),
    #[error("{kind} label {id} out of range (vocabulary size {size})")]
    LabelOutOfRange {
        kind: &'static str,
        id: usize,
        size: usize,
    },
    #[error("image {0} is not in the train split")]
    NotTrainImage(usize),
    #[error(
        "no eligible anchors: every train image lacks a same-state, same-object or \
         irrelevant partner; check that the seen pairs connect states and objects"
    )]
    NoEligibleAnchors,
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("evaluation split has no {0}-pair images")]
    MissingClass(&'static str),
    #[error("split is empty")]
    EmptySplit,
    #[error("non-finite value in {term}")]
    NumericalAbort { term: &'static str },
}
