use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("capacity exceeded: {0}")]
    Capacity(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("integration failure: {0}")]
    Integration(String),
    #[error("invalid circuit: {0}")]
    Circuit(String),
    #[error("parse error at {position}: {message}")]
    Parse { position: String, message: String },
    #[error("layout error: {0}")]
    Layout(String),
    #[error("fold capacity exceeded: {0}")]
    FoldCapacity(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn arg<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Argument(msg.into()))
}
