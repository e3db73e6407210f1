use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VolError {
    #[error("{op}: shape mismatch: {detail}")]
    Shape { op: &'static str, detail: String },
    #[error("invalid tape: {0}")]
    InvalidTape(String),
    #[error("label {0} is not 0 or 1")]
    Label(f64),
    #[error("{0}: {1}")]
    Invalid(&'static str, String),
}

impl VolError {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        VolError::Shape {
            op,
            detail: detail.into(),
        }
    }
}
