use thiserror::Error;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(&'static str),
    #[error("tag stream `{stream}` is not time-sorted at index {index}")]
    Unsorted { stream: &'static str, index: usize },
    #[error("incompatible binning: {0}")]
    Binning(&'static str),
    #[error("insufficient data: {0}")]
    InsufficientData(&'static str),
    #[error("invalid configuration: {0}")]
    Config(&'static str),
}
