use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NumError {
    #[error("dimension error in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },
    #[error("parameter error: {0}")]
    Parameter(String),
    #[error("contract error: {0}")]
    Contract(String),
    #[error("non-finite value produced by {op} (node {node})")]
    NonFinite { op: &'static str, node: usize },
}

impl NumError {
    pub(crate) fn dim(op: &'static str, detail: impl Into<String>) -> Self {
        NumError::Dimension {
            op,
            detail: detail.into(),
        }
    }
}

pub type NumResult<T> = Result<T, NumError>;
