use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("matrix is singular or not positive definite (min eigenvalue {min_eigenvalue:e})")]
    Singular { min_eigenvalue: f64 },

    #[error("Jacobi eigensolver did not converge within {sweeps} sweeps")]
    NoConvergence { sweeps: usize },

    #[error("column {column} has zero norm; shrinkage is undefined")]
    ZeroNormColumn { column: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("replicate {index} failed: {source}")]
    Replicate {
        index: u64,
        #[source]
        source: Box<Error>,
    },
}
