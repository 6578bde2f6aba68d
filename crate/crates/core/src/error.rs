use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("grid truncates the mode: captured power fraction {captured:.6}")]
    Truncation { captured: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("vacuum step of {dz} m exceeds the alias-free limit of {max} m for this grid")]
    Aliasing { dz: f64, max: f64 },

    #[error("covariance matrix is singular even after regularization: {0}")]
    Singular(String),

    #[error("crosstalk row {row} ({basis}) has no captured energy in the encoding subspace")]
    DegenerateRow { row: usize, basis: &'static str },

    #[error("malformed input: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
