use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("state became non-finite at step {step}")]
    NonFinite { step: usize },
    #[error("noise model rejected: {0}")]
    NoiseModel(String),
    #[error("matrix is numerically singular or not positive definite: {0}")]
    Singular(String),
    #[error("unbounded consistency set: {0}")]
    Unbounded(String),
    #[error("empty consistency set: {0}")]
    EmptySet(String),
    #[error(transparent)]
    Lmi(#[from] lpvdd_lmi::LmiError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn dim_check(ok: bool, what: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Dimension(what()))
    }
}
