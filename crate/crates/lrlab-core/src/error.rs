use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("site {0} is not part of the context")]
    SiteNotInContext(String),
    #[error("geometry violation: {0}")]
    Geometry(String),
    #[error("hypothesis violated: {0}")]
    Hypothesis(String),
    #[error("resource guard: {0}")]
    ResourceGuard(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;
