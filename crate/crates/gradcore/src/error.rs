use thiserror::Error;

pub type Result<T> = std::result::Result<T, GradError>;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum GradError {
    #[error("{op}: shape mismatch on axis {axis}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        axis: usize,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op}: expected rank {expected}, got shape {got:?}")]
    Rank {
        op: &'static str,
        expected: usize,
        got: Vec<usize>,
    },
    #[error("{op}: expected {expected:?} tensor, got {got:?}")]
    DType {
        op: &'static str,
        expected: crate::DType,
        got: crate::DType,
    },
    #[error("{op}: {len} elements do not fill shape {shape:?}")]
    DataLength {
        op: &'static str,
        len: usize,
        shape: Vec<usize>,
    },
    #[error("{op}: domain violation: {detail}")]
    Domain { op: &'static str, detail: String },
    #[error("{op}: extent {extent} on axis {axis} is not a power of two")]
    NotPowerOfTwo {
        op: &'static str,
        axis: usize,
        extent: usize,
    },
    #[error("{op}: extent {extent} on axis {axis} is not divisible by {divisor}")]
    NotDivisible {
        op: &'static str,
        axis: usize,
        extent: usize,
        divisor: usize,
    },
    #[error("backward: root must be scalar, got shape {0:?}")]
    NonScalarRoot(Vec<usize>),
    #[error("backward: root has no diff record")]
    NoDiffRecord,
    #[error("{op}: {detail}")]
    Invalid { op: &'static str, detail: String },
}

impl GradError {
    pub(crate) fn invalid(op: &'static str, detail: impl Into<String>) -> Self {
        GradError::Invalid {
            op,
            detail: detail.into(),
        }
    }
}
