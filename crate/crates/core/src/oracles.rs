//! Closed-form and series reference values.
//!
//! `A(λ²) = (n−2)·E[1/‖x‖²]` for `x ~ N_n(θ, I)` with `‖θ‖² = λ²`. Since
//! `‖x‖²` is a Poisson(λ²/2) mixture of central `χ²_{n+2K}` variables and
//! `E[1/χ²_k] = 1/(k−2)`, this is `(n−2)·E_K[1/(n−2+2K)]`.

use crate::error::{Error, Result};
use crate::linalg::Mat;

/// Poisson tail mass below which the series is truncated.
const TAIL_CUTOFF: f64 = 1e-14;
/// Above this noncentrality the asymptotic expansion replaces the series.
const ASYMPTOTIC_LAMBDA2: f64 = 1e4;

fn check_n(n: usize) -> Result<()> {
    if n < 3 {
        return Err(Error::InvalidParameter(format!(
            "A(lambda^2) is only finite for n >= 3, got n = {n}"
        )));
    }
    Ok(())
}

/// `A(λ²)`, in `(0, 1]`, with `A(0) = 1`.
pub fn a_lambda(n: usize, lambda2: f64) -> Result<f64> {
    check_n(n)?;
    if !(lambda2 >= 0.0) || !lambda2.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "lambda2 must be finite and non-negative, got {lambda2}"
        )));
    }
    let c = (n - 2) as f64;
    if lambda2 == 0.0 {
        return Ok(1.0);
    }
    let mean_inv = if lambda2 > ASYMPTOTIC_LAMBDA2 {
        asymptotic_mean_inverse(c, lambda2)
    } else {
        poisson_mixture_mean_inverse(c, lambda2)
    };
    Ok(c * mean_inv)
}

/// `E[1/(c + 2K)]`, `K ~ Poisson(λ²/2)`, summed outward from the mode.
fn poisson_mixture_mean_inverse(c: f64, lambda2: f64) -> f64 {
    let mu = lambda2 / 2.0;
    let mode = mu.floor() as u64;
    // log P(K = mode) = −μ + mode·ln μ − ln(mode!)
    let ln_fact: f64 = (2..=mode).map(|k| (k as f64).ln()).sum();
    let w_mode = if mode == 0 {
        (-mu).exp()
    } else {
        (-mu + mode as f64 * mu.ln() - ln_fact).exp()
    };
    let term = |k: u64, w: f64| w / (c + 2.0 * k as f64);

    let mut upward = 0.0;
    let mut w = w_mode;
    let mut k = mode;
    loop {
        upward += term(k, w);
        let ratio = mu / (k + 1) as f64;
        w *= ratio;
        k += 1;
        // Past the mode the weights decay at least geometrically with `ratio`.
        let next_ratio = mu / (k + 1) as f64;
        if next_ratio < 1.0 && w / (1.0 - next_ratio) < TAIL_CUTOFF {
            break;
        }
    }

    let mut downward = 0.0;
    let mut w = w_mode;
    let mut k = mode;
    while k > 0 {
        w *= k as f64 / mu;
        k -= 1;
        downward += term(k, w);
        let ratio = k as f64 / mu;
        if ratio < 1.0 && w * ratio / (1.0 - ratio) < TAIL_CUTOFF {
            break;
        }
    }
    upward + downward
}

/// Central-moment expansion of `E[1/(c + 2K)]` around `K = μ`:
/// `Σ_r (−2)^r m_r / s^{r+1}` with `s = c + λ²` and Poisson central moments
/// `m_r`, kept through `r = 6`.
fn asymptotic_mean_inverse(c: f64, lambda2: f64) -> f64 {
    let mu = lambda2 / 2.0;
    let s = c + lambda2;
    let m2 = mu;
    let m3 = mu;
    let m4 = 3.0 * mu * mu + mu;
    let m5 = 10.0 * mu * mu + mu;
    let m6 = 15.0 * mu.powi(3) + 25.0 * mu * mu + mu;
    1.0 / s + 4.0 * m2 / s.powi(3) - 8.0 * m3 / s.powi(4) + 16.0 * m4 / s.powi(5)
        - 32.0 * m5 / s.powi(6)
        + 64.0 * m6 / s.powi(7)
}

/// Exact scalar risk of the known-variance James-Stein estimator,
/// `nσ² − a(2−a)σ²(n−2)A(λ²)`.
pub fn scalar_risk_exact(n: usize, sigma2: f64, lambda2: f64, a: f64) -> Result<f64> {
    let big_a = a_lambda(n, lambda2)?;
    let nf = n as f64;
    Ok(nf * sigma2 - a * (2.0 - a) * sigma2 * (nf - 2.0) * big_a)
}

/// Leading-order uniform-direction risk `αᵀRα` for the equal-column spike
/// `θ_(j) = κθ*`: `n − 2a·m²/κ² + a²·p·m²/κ²`, `m = n − 2`, with the
/// `O(1/κ⁴)` remainder dropped.
pub fn counterexample_quadratic(n: usize, p: usize, kappa: f64, a: f64) -> Result<f64> {
    check_n(n)?;
    if p == 0 || !(kappa > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "need p >= 1 and kappa > 0, got p = {p}, kappa = {kappa}"
        )));
    }
    let m = (n - 2) as f64;
    let r = m * m / (kappa * kappa);
    Ok(n as f64 - 2.0 * a * r + a * a * r * p as f64)
}

/// Matrix risk of the diagonal James-Stein estimator at `Θ = 0`:
/// `(nσ² − a(2−a)σ²(n−2))·I_p`. The columns are independent and each
/// `E[g_(j)]` vanishes by sign symmetry, so the off-diagonals are zero.
pub fn matrix_risk_origin(n: usize, p: usize, sigma2: f64, a: f64) -> Result<Mat> {
    if p == 0 {
        return Err(Error::InvalidParameter("p must be at least 1".into()));
    }
    let r = scalar_risk_exact(n, sigma2, 0.0, a)?;
    Ok(Mat::from_diag(&vec![r; p]))
}
