use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("{what} is not positive semidefinite (min eigenvalue {min_eig:e})")]
    NotPsd { what: String, min_eig: f64 },
    #[error("{0} is not positive definite")]
    NotPd(String),
    #[error("step {k}: rk(C2 G2) = {rank}, need {required}; unknown input not estimable")]
    Estimability { k: usize, rank: usize, required: usize },
    #[error("step {k}: {what} is singular")]
    Numerical { k: usize, what: String },
    #[error("gain construction failed: {0}")]
    Gain(String),
    #[error("invalid usage: {0}")]
    InvalidUsage(String),
}

pub type Result<T> = std::result::Result<T, Error>;
