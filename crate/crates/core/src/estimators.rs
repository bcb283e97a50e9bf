//! Estimators of the mean matrix Θ.
//!
//! The shrinkage estimators follow the decomposition `θ̂ = x − a·g(x)` with
//! the James-Stein shrinkage function `g = s·(n−2)·x/‖x‖²`, where the scale
//! `s` is σ² when the variance is known and `u/(ν+2)` otherwise. Shrinkage is
//! never truncated at zero: the factor `1 − a·s·(n−2)/‖x‖²` may go negative.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{gram, matmul, spd_sqrt, spd_sqrt_inv, sym_eigen, Mat};
use crate::replicate;
use crate::sampling::{Draw, ModelSpec, Sampler, SeedSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    Mle,
    DiagonalJs,
    WhitenedJs,
    EfronMorris,
}

impl EstimatorKind {
    pub fn name(&self) -> &'static str {
        match self {
            EstimatorKind::Mle => "mle",
            EstimatorKind::DiagonalJs => "diagonal-js",
            EstimatorKind::WhitenedJs => "whitened-js",
            EstimatorKind::EfronMorris => "efron-morris",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSpec {
    pub kind: EstimatorKind,
    /// Tuning constant; ignored by `Mle` and `EfronMorris`.
    pub a: f64,
    /// Shrink with the true σ² rather than the auxiliary `u`.
    pub sigma_known: bool,
}

impl EstimatorSpec {
    pub fn mle() -> Self {
        Self {
            kind: EstimatorKind::Mle,
            a: 0.0,
            sigma_known: true,
        }
    }

    pub fn diagonal(a: f64) -> Self {
        Self {
            kind: EstimatorKind::DiagonalJs,
            a,
            sigma_known: true,
        }
    }

    pub fn diagonal_unknown(a: f64) -> Self {
        Self {
            sigma_known: false,
            ..Self::diagonal(a)
        }
    }

    pub fn whitened(a: f64) -> Self {
        Self {
            kind: EstimatorKind::WhitenedJs,
            a,
            sigma_known: true,
        }
    }

    pub fn efron_morris() -> Self {
        Self {
            kind: EstimatorKind::EfronMorris,
            a: 1.0,
            sigma_known: true,
        }
    }

    pub fn with_a(self, a: f64) -> Self {
        Self { a, ..self }
    }

    pub fn validate(&self, model: &ModelSpec) -> Result<()> {
        if !self.a.is_finite() {
            return Err(Error::InvalidParameter("tuning constant a must be finite".into()));
        }
        let uses_js = matches!(self.kind, EstimatorKind::DiagonalJs | EstimatorKind::WhitenedJs);
        if uses_js && model.n < 3 {
            return Err(Error::InvalidParameter(format!(
                "James-Stein shrinkage needs n >= 3, got n = {}",
                model.n
            )));
        }
        match self.kind {
            EstimatorKind::DiagonalJs if !self.sigma_known && model.variance.is_known() => {
                Err(Error::InvalidParameter(
                    "unknown-variance shrinkage needs a model with auxiliary u (set nu)".into(),
                ))
            }
            EstimatorKind::WhitenedJs if model.row_cov.is_none() => Err(Error::InvalidParameter(
                "whitened-js needs a row covariance".into(),
            )),
            EstimatorKind::WhitenedJs if !self.sigma_known => Err(Error::InvalidParameter(
                "whitened-js is only defined for known variance".into(),
            )),
            EstimatorKind::EfronMorris if model.n < model.p + 2 => {
                Err(Error::InvalidParameter(format!(
                    "efron-morris needs n >= p + 2, got n = {}, p = {}",
                    model.n, model.p
                )))
            }
            _ => Ok(()),
        }
    }
}

/// Diagonal of `D` in `Θ̂ = X·D`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShrinkDiag {
    pub d: Vec<f64>,
}

fn norm_sq(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

/// `1 − a·scale·(n−2)/‖x‖²`.
///
/// Every shrinkage path goes through this expression so that equivalent
/// estimators agree bit for bit.
#[inline]
fn shrink_factor(norm2: f64, n: usize, a: f64, scale: f64) -> f64 {
    let m = (n - 2) as f64;
    1.0 - (a * scale * m) * (1.0 / norm2)
}

fn check_vector(x: &[f64]) -> Result<f64> {
    if x.len() < 3 {
        return Err(Error::InvalidParameter(format!(
            "James-Stein shrinkage needs n >= 3, got n = {}",
            x.len()
        )));
    }
    let norm2 = norm_sq(x);
    if norm2 == 0.0 {
        return Err(Error::ZeroNormColumn { column: 0 });
    }
    Ok(norm2)
}

/// Known-variance James-Stein estimate `x·(1 − a·σ²(n−2)/‖x‖²)`.
pub fn js_shrink_vector(x: &[f64], a: f64, sigma2: f64) -> Result<Vec<f64>> {
    if !(sigma2 > 0.0) {
        return Err(Error::InvalidParameter(format!("sigma2 must be positive, got {sigma2}")));
    }
    let norm2 = check_vector(x)?;
    let d = shrink_factor(norm2, x.len(), a, sigma2);
    Ok(x.iter().map(|v| v * d).collect())
}

/// Unknown-variance James-Stein estimate using `u ~ σ²χ²_ν`.
pub fn js_shrink_vector_unknown(x: &[f64], u: f64, nu: u32, a: f64) -> Result<Vec<f64>> {
    if !(u > 0.0) || nu == 0 {
        return Err(Error::InvalidParameter(format!(
            "need u > 0 and nu >= 1, got u = {u}, nu = {nu}"
        )));
    }
    let norm2 = check_vector(x)?;
    let d = shrink_factor(norm2, x.len(), a, u / (nu as f64 + 2.0));
    Ok(x.iter().map(|v| v * d).collect())
}

/// Per-column scale `s_j` of the shrinkage function.
fn column_scales(p: usize, u: Option<&[f64]>, spec: &EstimatorSpec, model: &ModelSpec) -> Result<Vec<f64>> {
    if spec.sigma_known {
        return Ok(vec![model.variance.sigma2(); p]);
    }
    let nu = model.variance.nu().ok_or_else(|| {
        Error::InvalidParameter("unknown-variance shrinkage needs nu".into())
    })?;
    let u = u.ok_or_else(|| Error::InvalidParameter("auxiliary u is required".into()))?;
    if u.len() != p {
        return Err(Error::DimensionMismatch(format!("u has {} entries, expected {p}", u.len())));
    }
    Ok(u.iter().map(|&uj| uj / (nu as f64 + 2.0)).collect())
}

fn checked_column_norms(x: &Mat) -> Result<Vec<f64>> {
    if x.rows() < 3 {
        return Err(Error::InvalidParameter(format!(
            "James-Stein shrinkage needs n >= 3, got n = {}",
            x.rows()
        )));
    }
    (0..x.cols())
        .map(|j| {
            let norm2 = x.column_norm_sq(j);
            if norm2 == 0.0 {
                Err(Error::ZeroNormColumn { column: j })
            } else {
                Ok(norm2)
            }
        })
        .collect()
}

pub fn shrink_diag(x: &Mat, u: Option<&[f64]>, spec: &EstimatorSpec, model: &ModelSpec) -> Result<ShrinkDiag> {
    let norms = checked_column_norms(x)?;
    let scales = column_scales(x.cols(), u, spec, model)?;
    let n = x.rows();
    Ok(ShrinkDiag {
        d: norms
            .iter()
            .zip(&scales)
            .map(|(&norm2, &s)| shrink_factor(norm2, n, spec.a, s))
            .collect(),
    })
}

/// Column-wise James-Stein shrinkage, `X·diag(d_j)`.
pub fn diagonal_js(x: &Mat, u: Option<&[f64]>, spec: &EstimatorSpec, model: &ModelSpec) -> Result<Mat> {
    let ShrinkDiag { d } = shrink_diag(x, u, spec, model)?;
    let mut out = x.clone();
    for i in 0..x.rows() {
        for (j, &dj) in d.iter().enumerate() {
            out[(i, j)] = x[(i, j)] * dj;
        }
    }
    Ok(out)
}

/// Unscaled shrinkage functions `G = [g_(1) … g_(p)]`, so that the diagonal
/// estimator equals `X − a·G`.
pub fn shrinkage_functions(x: &Mat, u: Option<&[f64]>, spec: &EstimatorSpec, model: &ModelSpec) -> Result<Mat> {
    let norms = checked_column_norms(x)?;
    let scales = column_scales(x.cols(), u, spec, model)?;
    let m = (x.rows() - 2) as f64;
    let mut g = Mat::zeros(x.rows(), x.cols());
    for j in 0..x.cols() {
        let c = scales[j] * m / norms[j];
        for i in 0..x.rows() {
            g[(i, j)] = c * x[(i, j)];
        }
    }
    Ok(g)
}

/// Inverse of an SPD matrix through its eigendecomposition, rejecting
/// near-singular input the same way as [`crate::linalg::solve_spd`].
fn spd_inverse(s: &Mat) -> Result<Mat> {
    let eig = sym_eigen(s)?;
    let (min, max) = (eig.min_eigenvalue(), eig.max_eigenvalue());
    if !(max > 0.0) || min <= s.rows() as f64 * 1e-12 * max {
        return Err(Error::Singular { min_eigenvalue: min });
    }
    Ok(eig.apply_spectral(|l| 1.0 / l))
}

/// Efron–Morris matrix estimator `X·(I − (n−p−1)·S⁻¹)` with `S = XᵀX`.
pub fn efron_morris(x: &Mat) -> Result<Mat> {
    let (n, p) = x.shape();
    if n < p + 2 {
        return Err(Error::InvalidParameter(format!(
            "efron-morris needs n >= p + 2, got n = {n}, p = {p}"
        )));
    }
    let s_inv = spd_inverse(&gram(x))?;
    let c = (n - p - 1) as f64;
    let mut factor = Mat::identity(p);
    for i in 0..p {
        for j in 0..p {
            factor[(i, j)] -= c * s_inv[(i, j)];
        }
    }
    matmul(x, &factor)
}

/// Whitening transform `A = Σ^{-1/2}` and its inverse `Σ^{1/2}`.
#[derive(Debug, Clone)]
pub struct Whitening {
    pub a: Mat,
    pub a_inv: Mat,
}

impl Whitening {
    pub fn new(sigma: &Mat) -> Result<Self> {
        Ok(Self {
            a: spd_sqrt_inv(sigma)?,
            a_inv: spd_sqrt(sigma)?,
        })
    }

    fn apply(&self, x: &Mat, spec: &EstimatorSpec, model: &ModelSpec) -> Result<Mat> {
        let y = matmul(x, &self.a)?;
        let phi_hat = diagonal_js(&y, None, &EstimatorSpec { sigma_known: true, ..*spec }, model)?;
        matmul(&phi_hat, &self.a_inv)
    }
}

/// Whitens the columns with `Y = X·Σ^{-1/2}`, shrinks `Y` column-wise with
/// known variance and maps back with `Σ^{1/2}`.
pub fn whitened_js(x: &Mat, spec: &EstimatorSpec, model: &ModelSpec) -> Result<Mat> {
    let sigma = model
        .row_cov
        .as_ref()
        .ok_or_else(|| Error::InvalidParameter("whitened-js needs a row covariance".into()))?;
    Whitening::new(sigma)?.apply(x, spec, model)
}

/// Matrix quadratic loss `(Θ̂ − Θ)ᵀ(Θ̂ − Θ)`.
pub fn matrix_loss(theta_hat: &Mat, theta: &Mat) -> Result<Mat> {
    Ok(gram(&theta_hat.sub(theta)?))
}

/// An estimator bound to a model, with any model-dependent setup done once.
#[derive(Debug, Clone)]
pub struct PreparedEstimator<'a> {
    spec: EstimatorSpec,
    model: &'a ModelSpec,
    whitening: Option<Whitening>,
}

impl<'a> PreparedEstimator<'a> {
    pub fn new(spec: EstimatorSpec, model: &'a ModelSpec) -> Result<Self> {
        spec.validate(model)?;
        let whitening = match spec.kind {
            EstimatorKind::WhitenedJs => Some(Whitening::new(
                model.row_cov.as_ref().expect("validated"),
            )?),
            _ => None,
        };
        Ok(Self {
            spec,
            model,
            whitening,
        })
    }

    pub fn spec(&self) -> &EstimatorSpec {
        &self.spec
    }

    pub fn estimate(&self, draw: &Draw) -> Result<Mat> {
        match self.spec.kind {
            EstimatorKind::Mle => Ok(draw.x.clone()),
            EstimatorKind::DiagonalJs => diagonal_js(&draw.x, draw.u.as_deref(), &self.spec, self.model),
            EstimatorKind::WhitenedJs => self
                .whitening
                .as_ref()
                .expect("prepared")
                .apply(&draw.x, &self.spec, self.model),
            EstimatorKind::EfronMorris => efron_morris(&draw.x),
        }
    }
}

/// Evaluates any estimator on one draw.
pub fn estimate(draw: &Draw, spec: &EstimatorSpec, model: &ModelSpec) -> Result<Mat> {
    PreparedEstimator::new(*spec, model)?.estimate(draw)
}

/// Monte Carlo estimates of the per-column cross-product terms
/// `δ_j = E[(x_(j) − θ_(j))ᵀ g_(j)]` and `γ_j = E[g_(j)ᵀ g_(j)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossProductStats {
    pub delta: Vec<f64>,
    pub delta_se: Vec<f64>,
    pub gamma: Vec<f64>,
    pub gamma_se: Vec<f64>,
    /// Standard error of the paired difference `δ_j − γ_j`.
    pub diff_se: Vec<f64>,
    pub reps: u64,
}

impl CrossProductStats {
    /// Largest `|δ_j − γ_j|` in units of its paired standard error.
    pub fn max_z(&self) -> f64 {
        self.delta
            .iter()
            .zip(&self.gamma)
            .zip(&self.diff_se)
            .map(|((d, g), se)| if *se > 0.0 { (d - g).abs() / se } else { 0.0 })
            .fold(0.0, f64::max)
    }
}

pub fn cross_product_stats(model: &ModelSpec, spec: &EstimatorSpec, reps: u64, seed: &SeedSpec) -> Result<CrossProductStats> {
    if spec.kind != EstimatorKind::DiagonalJs {
        return Err(Error::InvalidParameter(
            "cross-product statistics are defined for the column-wise James-Stein shrinkage".into(),
        ));
    }
    spec.validate(model)?;
    if reps < 2 {
        return Err(Error::InvalidParameter("reps must be at least 2".into()));
    }
    let sampler = Sampler::new(model)?;
    let p = model.p;
    // layout: [δ_1, γ_1, δ_2, γ_2, ...]
    let moments = replicate::run(reps, &[2 * p], |r, out| {
        let draw = sampler.draw(seed, r);
        let g = shrinkage_functions(&draw.x, draw.u.as_deref(), spec, model)?;
        for j in 0..p {
            let mut delta = 0.0;
            let mut gamma = 0.0;
            for i in 0..model.n {
                let gij = g[(i, j)];
                delta += (draw.x[(i, j)] - model.theta[(i, j)]) * gij;
                gamma += gij * gij;
            }
            out[2 * j] = delta;
            out[2 * j + 1] = gamma;
        }
        Ok(())
    })?;
    let m = &moments[0];
    let mut stats = CrossProductStats {
        delta: Vec::with_capacity(p),
        delta_se: Vec::with_capacity(p),
        gamma: Vec::with_capacity(p),
        gamma_se: Vec::with_capacity(p),
        diff_se: Vec::with_capacity(p),
        reps,
    };
    for j in 0..p {
        stats.delta.push(m.mean()[2 * j]);
        stats.delta_se.push(m.std_error(2 * j));
        stats.gamma.push(m.mean()[2 * j + 1]);
        stats.gamma_se.push(m.std_error(2 * j + 1));
        let mut c = vec![0.0; 2 * p];
        c[2 * j] = 1.0;
        c[2 * j + 1] = -1.0;
        stats.diff_se.push(m.linear_combination(&c).1);
    }
    Ok(stats)
}

/// The three members of the Cauchy–Schwarz chain bounding the shrinkage
/// cross terms:
/// `Σ α_j α_k g_jᵀg_k ≤ (Σ |α_j| ‖g_j‖)² ≤ p · Σ α_j² ‖g_j‖²`.
pub fn cauchy_schwarz_chain(g: &Mat, alpha: &[f64]) -> Result<(f64, f64, f64)> {
    let p = g.cols();
    if alpha.len() != p {
        return Err(Error::DimensionMismatch(format!(
            "alpha has {} entries, G has {p} columns",
            alpha.len()
        )));
    }
    let s = gram(g);
    let quad = s.quad_form(alpha);
    let weighted: f64 = (0..p).map(|j| alpha[j].abs() * s[(j, j)].sqrt()).sum();
    let bound: f64 = p as f64 * (0..p).map(|j| alpha[j] * alpha[j] * s[(j, j)]).sum::<f64>();
    Ok((quad, weighted * weighted, bound))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::VarianceMode;

    fn model(n: usize, p: usize) -> ModelSpec {
        ModelSpec::known(Mat::zeros(n, p), 1.0).unwrap()
    }

    #[test]
    fn vector_no_shrinkage_at_zero_a() {
        let x = [1.5, -2.0, 0.25, 4.0];
        assert_eq!(js_shrink_vector(&x, 0.0, 2.0).unwrap(), x.to_vec());
        assert_eq!(js_shrink_vector_unknown(&x, 3.0, 4, 0.0).unwrap(), x.to_vec());
    }

    #[test]
    fn vector_hand_values() {
        assert_eq!(js_shrink_vector(&[1.0, 0.0, 0.0], 1.0, 1.0).unwrap(), vec![0.0; 3]);
        let out = js_shrink_vector(&[3.0, 0.0, 0.0, 0.0, 0.0], 1.0, 1.0).unwrap();
        assert!((out[0] - 2.0).abs() < 1e-15);
        assert!(out[1..].iter().all(|&v| v == 0.0));

        let out = js_shrink_vector_unknown(&[3.0, 0.0, 0.0, 0.0, 0.0], 4.0, 2, 1.0).unwrap();
        assert!((out[0] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn unknown_reduces_to_known() {
        let x = [0.3, -1.2, 2.2, 0.7, -0.1, 1.9];
        let (sigma2, nu) = (1.7, 6);
        let known = js_shrink_vector(&x, 0.8, sigma2).unwrap();
        let unknown = js_shrink_vector_unknown(&x, (nu as f64 + 2.0) * sigma2, nu, 0.8).unwrap();
        for (a, b) in known.iter().zip(&unknown) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_vector_is_an_error() {
        assert!(matches!(
            js_shrink_vector(&[0.0; 4], 1.0, 1.0),
            Err(Error::ZeroNormColumn { .. })
        ));
        assert!(js_shrink_vector(&[1.0, 2.0], 1.0, 1.0).is_err());
    }

    #[test]
    fn zero_column_is_named() {
        let x = Mat::from_rows(&[vec![1.0, 0.0], vec![2.0, 0.0], vec![3.0, 0.0]]).unwrap();
        let err = diagonal_js(&x, None, &EstimatorSpec::diagonal(1.0), &model(3, 2)).unwrap_err();
        assert!(matches!(err, Error::ZeroNormColumn { column: 1 }));
    }

    #[test]
    fn diagonal_single_column_matches_vector() {
        let col = [0.4, -1.1, 2.5, 0.9];
        let x = Mat::column_vector(&col).unwrap();
        let m = ModelSpec::known(Mat::zeros(4, 1), 2.5).unwrap();
        let out = diagonal_js(&x, None, &EstimatorSpec::diagonal(0.7), &m).unwrap();
        assert_eq!(out.column(0), js_shrink_vector(&col, 0.7, 2.5).unwrap());
        assert_eq!(diagonal_js(&x, None, &EstimatorSpec::diagonal(0.0), &m).unwrap(), x);
    }

    #[test]
    fn factor_can_go_negative() {
        let x = Mat::from_rows(&[vec![0.1, 5.0], vec![0.1, 0.0], vec![0.1, 0.0]]).unwrap();
        let d = shrink_diag(&x, None, &EstimatorSpec::diagonal(1.0), &model(3, 2)).unwrap().d;
        assert!(d[0] < 0.0, "small column should be over-shrunk: {d:?}");
        assert!(d[1] > 0.0 && d[1] < 1.0);
    }

    #[test]
    fn unknown_diagonal_needs_u() {
        let m = ModelSpec::new(Mat::zeros(4, 2), VarianceMode::Unknown { sigma2: 1.0, nu: 3 }, None).unwrap();
        let x = Mat::from_vec(4, 2, vec![1.0; 8]).unwrap();
        assert!(diagonal_js(&x, None, &EstimatorSpec::diagonal_unknown(1.0), &m).is_err());
        assert!(diagonal_js(&x, Some(&[1.0, 2.0]), &EstimatorSpec::diagonal_unknown(1.0), &m).is_ok());
    }

    #[test]
    fn efron_morris_hand_value() {
        let x = Mat::column_vector(&[2.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(efron_morris(&x).unwrap().column(0), vec![1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn efron_morris_single_column_is_js() {
        let col = [0.3, -1.7, 0.8, 2.2, -0.4];
        let x = Mat::column_vector(&col).unwrap();
        assert_eq!(efron_morris(&x).unwrap().column(0), js_shrink_vector(&col, 1.0, 1.0).unwrap());
    }

    #[test]
    fn efron_morris_rejects_small_n_and_singular() {
        assert!(efron_morris(&Mat::from_vec(3, 2, vec![1.0; 6]).unwrap()).is_err());
        let collinear = Mat::from_rows(&[
            vec![1.0, 2.0],
            vec![2.0, 4.0],
            vec![3.0, 6.0],
            vec![4.0, 8.0],
        ])
        .unwrap();
        assert!(matches!(efron_morris(&collinear), Err(Error::Singular { .. })));
    }

    #[test]
    fn whitened_diagonal_sigma_hand_decomposition() {
        let x = Mat::from_rows(&[
            vec![2.0, 3.0],
            vec![-1.0, 6.0],
            vec![0.5, -1.5],
            vec![4.0, 0.3],
        ])
        .unwrap();
        let sigma = Mat::from_diag(&[4.0, 9.0]);
        let m = ModelSpec::new(Mat::zeros(4, 2), VarianceMode::Known { sigma2: 1.0 }, Some(sigma)).unwrap();
        let got = whitened_js(&x, &EstimatorSpec::whitened(0.8), &m).unwrap();

        let c0: Vec<f64> = x.column(0).iter().map(|v| v / 2.0).collect();
        let c1: Vec<f64> = x.column(1).iter().map(|v| v / 3.0).collect();
        let s0 = js_shrink_vector(&c0, 0.8, 1.0).unwrap();
        let s1 = js_shrink_vector(&c1, 0.8, 1.0).unwrap();
        for i in 0..4 {
            assert!((got[(i, 0)] - 2.0 * s0[i]).abs() < 1e-12);
            assert!((got[(i, 1)] - 3.0 * s1[i]).abs() < 1e-12);
        }

        let zero_a = whitened_js(&x, &EstimatorSpec::whitened(0.0), &m).unwrap();
        for (a, b) in zero_a.as_slice().iter().zip(x.as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn whitened_identity_is_diagonal() {
        let x = Mat::from_rows(&[vec![1.0, -2.0], vec![0.5, 0.7], vec![-3.0, 1.1]]).unwrap();
        let m = ModelSpec::new(Mat::zeros(3, 2), VarianceMode::Known { sigma2: 1.0 }, Some(Mat::identity(2))).unwrap();
        assert_eq!(
            whitened_js(&x, &EstimatorSpec::whitened(0.6), &m).unwrap(),
            diagonal_js(&x, None, &EstimatorSpec::diagonal(0.6), &m).unwrap()
        );
    }

    #[test]
    fn loss_examples() {
        let theta = Mat::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(matrix_loss(&theta, &theta).unwrap(), Mat::zeros(2, 2));
        let shifted = theta.add(&Mat::identity(2)).unwrap();
        assert_eq!(matrix_loss(&shifted, &theta).unwrap(), Mat::identity(2));
        assert!(matrix_loss(&theta, &Mat::zeros(3, 2)).is_err());
    }

    #[test]
    fn cauchy_schwarz_equal_weights_is_tight() {
        // |α_j|·‖g_j‖ all equal makes the last step an equality.
        let g = Mat::from_rows(&[vec![1.0, 2.0], vec![0.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let alpha = [2.0 / 5f64.sqrt(), 1.0 / 5f64.sqrt()];
        let (q, mid, bound) = cauchy_schwarz_chain(&g, &alpha).unwrap();
        assert!(q <= mid * (1.0 + 1e-12));
        assert!((mid - bound).abs() < 1e-12);
    }

    #[test]
    fn spec_validation() {
        let m = model(4, 3);
        assert!(EstimatorSpec::whitened(1.0).validate(&m).is_err());
        assert!(EstimatorSpec::efron_morris().validate(&m).is_err());
        assert!(EstimatorSpec::diagonal(f64::NAN).validate(&m).is_err());
        assert!(EstimatorSpec::diagonal_unknown(1.0).validate(&m).is_err());
        assert!(EstimatorSpec::diagonal(1.0).validate(&model(2, 1)).is_err());
    }
}
