use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("capacity exceeded: {0}")]
    Capacity(String),
    #[error("not converged: {0}")]
    NotConverged(String),
    #[error("internal contract violated: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;
