//! James-Stein-type shrinkage for an `n×p` matrix of normal means, judged by
//! the `p×p` matrix quadratic loss `(Θ̂ − Θ)ᵀ(Θ̂ − Θ)`.
//!
//! The crate is layered bottom-up:
//!
//! - [`linalg`]: dense matrices, Jacobi eigensolver, SPD solves and roots.
//! - [`sampling`]: reproducible per-replicate draws of `X` (and `u`).
//! - [`estimators`]: MLE, column-wise James-Stein, whitened James-Stein and
//!   the Efron–Morris matrix estimator, plus the matrix loss.
//! - [`oracles`]: series and closed-form reference values.
//! - [`risk`]: Monte Carlo matrix risk, paired differences against the MLE
//!   and positive-definite dominance verdicts.
//! - [`cli`]: experiment configuration and report rendering behind the
//!   `matshrink` binary.

pub mod cli;
pub mod error;
pub mod estimators;
pub mod linalg;
pub mod oracles;
pub mod replicate;
pub mod risk;
pub mod sampling;

pub use error::{Error, Result};
pub use linalg::Mat;
