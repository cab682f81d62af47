use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T, E = CoreError> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CoreError {
    #[error("tensor data length {len} does not match shape {shape:?}")]
    DataLength { shape: Vec<usize>, len: usize },

    #[error("{op}: shape mismatch, expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        op: &'static str,
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error("layer {index} ({layer}): {source}")]
    Layer {
        index: usize,
        layer: String,
        #[source]
        source: alloc::boxed::Box<CoreError>,
    },

    #[error("computation record was already consumed by a backward pass")]
    RecordConsumed,

    #[error("computation record has no output")]
    EmptyRecord,

    #[error("label {0} is not in {{0, 1}}")]
    InvalidLabel(f64),

    #[error("{0} cannot be used as a regression loss")]
    UnsupportedRegressionLoss(&'static str),

    #[error("invalid architecture: {0}")]
    Architecture(String),

    #[error("parameter vector has length {found}, model expects {expected}")]
    ParamCount { expected: usize, found: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid distribution: {0}")]
    Distribution(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("diverged at step {step}: {what} = {value}")]
    Diverged {
        step: usize,
        what: &'static str,
        value: f64,
    },
}

impl CoreError {
    pub(crate) fn shape(op: &'static str, expected: &[usize], found: &[usize]) -> Self {
        CoreError::ShapeMismatch {
            op,
            expected: expected.to_vec(),
            found: found.to_vec(),
        }
    }
}
