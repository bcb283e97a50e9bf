//! Monte Carlo matrix risk, paired risk differences and dominance verdicts.
//!
//! Risk matrices are accumulated as their upper triangles (`vech`, row-major
//! over `i ≤ j`) together with the full sample covariance of that vector, so
//! any quadratic form `αᵀRα` gets an exact standard error.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{matrix_loss, EstimatorSpec, PreparedEstimator};
use crate::linalg::{gram, sym_eigen, Mat};
use crate::replicate::{self, Moments};
use crate::sampling::{ModelSpec, Sampler, SeedSpec};

pub const DEFAULT_Z_THRESHOLD: f64 = 3.0;
const SYMMETRY_TOL: f64 = 1e-10;
/// Pairwise directions `(e_j ± e_k)/√2` join the α grid up to this `p`.
const PAIRWISE_GRID_MAX_P: usize = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThetaScenario {
    Zero,
    /// Every column equals `κθ*` for a unit vector `θ*` (first basis vector
    /// when omitted).
    SpikeEqualColumns {
        kappa: f64,
        theta_star: Option<Vec<f64>>,
    },
    /// Independent `N(0, scale²)` entries from a fixed seed.
    RandomGaussian { scale: f64, seed: u64 },
    Custom { theta: Mat },
}

pub fn make_theta(scenario: &ThetaScenario, n: usize, p: usize) -> Result<Mat> {
    if n == 0 || p == 0 {
        return Err(Error::InvalidParameter("n and p must be at least 1".into()));
    }
    match scenario {
        ThetaScenario::Zero => Ok(Mat::zeros(n, p)),
        ThetaScenario::SpikeEqualColumns { kappa, theta_star } => {
            let star = match theta_star {
                Some(v) => v.clone(),
                None => {
                    let mut e = vec![0.0; n];
                    e[0] = 1.0;
                    e
                }
            };
            if star.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "theta* has {} entries, expected n = {n}",
                    star.len()
                )));
            }
            let norm = star.iter().map(|v| v * v).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > 1e-10 {
                return Err(Error::InvalidParameter(format!(
                    "theta* must have unit norm, got {norm}"
                )));
            }
            if !kappa.is_finite() {
                return Err(Error::InvalidParameter("kappa must be finite".into()));
            }
            let mut theta = Mat::zeros(n, p);
            for i in 0..n {
                for j in 0..p {
                    theta[(i, j)] = kappa * star[i];
                }
            }
            Ok(theta)
        }
        ThetaScenario::RandomGaussian { scale, seed } => {
            use rand::Rng;
            use rand_distr::StandardNormal;
            let mut rng = SeedSpec::new(*seed, u64::MAX).rng(0);
            let data = (0..n * p)
                .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
                .collect();
            Mat::from_vec(n, p, data)
        }
        ThetaScenario::Custom { theta } => {
            if theta.shape() != (n, p) {
                return Err(Error::DimensionMismatch(format!(
                    "custom theta is {}x{}, expected {n}x{p}",
                    theta.rows(),
                    theta.cols()
                )));
            }
            Ok(theta.clone())
        }
    }
}

fn vech_len(p: usize) -> usize {
    p * (p + 1) / 2
}

fn write_vech(m: &Mat, out: &mut [f64]) {
    let p = m.rows();
    let mut k = 0;
    for i in 0..p {
        for j in i..p {
            out[k] = m[(i, j)];
            k += 1;
        }
    }
}

fn unvech(v: &[f64], p: usize) -> Mat {
    let mut m = Mat::zeros(p, p);
    let mut k = 0;
    for i in 0..p {
        for j in i..p {
            m[(i, j)] = v[k];
            m[(j, i)] = v[k];
            k += 1;
        }
    }
    m
}

/// Coefficients `c` with `αᵀMα = Σ c_k vech(M)_k` for symmetric `M`.
fn projection_coefficients(alpha: &[f64]) -> Vec<f64> {
    let p = alpha.len();
    let mut c = Vec::with_capacity(vech_len(p));
    for i in 0..p {
        for j in i..p {
            let w = alpha[i] * alpha[j];
            c.push(if i == j { w } else { 2.0 * w });
        }
    }
    c
}

/// Entrywise summary of a Monte Carlo estimate of a symmetric matrix.
#[derive(Debug, Clone, PartialEq)]
struct SymSummary {
    mean: Mat,
    se: Mat,
    vech_cov: Vec<f64>,
}

impl SymSummary {
    fn from_moments(m: &Moments, p: usize) -> Self {
        let se: Vec<f64> = (0..m.dim()).map(|k| m.std_error(k)).collect();
        Self {
            mean: unvech(m.mean(), p),
            se: unvech(&se, p),
            vech_cov: m.covariance(),
        }
    }
}

/// `(αᵀMα, SE)` given the sample covariance of `vech(M)` when available,
/// otherwise the Minkowski bound `Σ |c_k|·se_k`.
fn project(mean: &Mat, se: &Mat, reps: u64, vech_cov: Option<&[f64]>, alpha: &[f64]) -> (f64, f64) {
    let value = mean.quad_form(alpha);
    let c = projection_coefficients(alpha);
    let se = match vech_cov {
        Some(cov) => {
            let k = c.len();
            let mut var = 0.0;
            for a in 0..k {
                for b in 0..k {
                    var += c[a] * cov[a * k + b] * c[b];
                }
            }
            (var.max(0.0) / reps as f64).sqrt()
        }
        None => {
            let mut se_vech = vec![0.0; c.len()];
            write_vech(se, &mut se_vech);
            c.iter().zip(&se_vech).map(|(ck, s)| ck.abs() * s).sum()
        }
    };
    (value, se)
}

/// Estimated matrix risk `E[(Θ̂ − Θ)ᵀ(Θ̂ − Θ)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskEstimate {
    pub mean: Mat,
    pub se: Mat,
    pub reps: u64,
    pub seed: SeedSpec,
    vech_cov: Vec<f64>,
}

impl RiskEstimate {
    /// `αᵀRα` and its standard error.
    pub fn project(&self, alpha: &[f64]) -> (f64, f64) {
        project(&self.mean, &self.se, self.reps, Some(&self.vech_cov), alpha)
    }
}

/// Mean and standard errors of the risk difference `R₀ − R_a`.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskDifference {
    pub mean: Mat,
    pub se: Mat,
    pub reps: u64,
    /// Sample covariance of `vech` of the per-replicate differences.
    vech_cov: Option<Vec<f64>>,
}

impl RiskDifference {
    /// A difference known only through its mean and entrywise SEs. Projected
    /// standard errors then fall back to the conservative Minkowski bound.
    pub fn from_entrywise(mean: Mat, se: Mat, reps: u64) -> Result<Self> {
        if !mean.is_square() || mean.shape() != se.shape() {
            return Err(Error::DimensionMismatch("mean and se must be matching square matrices".into()));
        }
        Ok(Self {
            mean,
            se,
            reps,
            vech_cov: None,
        })
    }

    pub fn project(&self, alpha: &[f64]) -> (f64, f64) {
        project(&self.mean, &self.se, self.reps, self.vech_cov.as_deref(), alpha)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Dominates,
    Fails,
    Inconclusive,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Dominates => "DOMINATES",
            Verdict::Fails => "FAILS",
            Verdict::Inconclusive => "INCONCLUSIVE",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlphaStat {
    pub alpha: Vec<f64>,
    pub value: f64,
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DominanceReport {
    pub diff_mean: Mat,
    pub diff_se: Mat,
    pub min_eig: f64,
    pub min_eig_dir: Vec<f64>,
    pub projected_se: f64,
    pub alpha_grid_stats: Vec<AlphaStat>,
    pub z_threshold: f64,
    pub verdict: Verdict,
}

impl DominanceReport {
    /// Grid entry for the uniform direction `(1/√p, …, 1/√p)`.
    pub fn uniform(&self) -> &AlphaStat {
        let p = self.diff_mean.rows();
        let u = 1.0 / (p as f64).sqrt();
        self.alpha_grid_stats
            .iter()
            .find(|s| s.alpha.iter().all(|&a| a == u))
            .expect("uniform direction is always on the grid")
    }
}

/// Unit directions probed by [`dominance_check`]: the coordinate vectors,
/// the uniform vector and, for small `p`, all `(e_j ± e_k)/√2`.
pub fn alpha_grid(p: usize) -> Vec<Vec<f64>> {
    let mut grid = Vec::new();
    for j in 0..p {
        let mut e = vec![0.0; p];
        e[j] = 1.0;
        grid.push(e);
    }
    if p > 1 {
        grid.push(vec![1.0 / (p as f64).sqrt(); p]);
    }
    if (2..=PAIRWISE_GRID_MAX_P).contains(&p) {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        for j in 0..p {
            for k in (j + 1)..p {
                for sign in [1.0, -1.0] {
                    if p == 2 && sign > 0.0 {
                        continue; // already the uniform vector
                    }
                    let mut v = vec![0.0; p];
                    v[j] = h;
                    v[k] = sign * h;
                    grid.push(v);
                }
            }
        }
    }
    grid
}

/// Turns an estimated `R₀ − R_a` into a statistical dominance verdict.
///
/// DOMINATES when the smallest eigenvalue exceeds `z` projected standard
/// errors along its eigenvector and every grid direction is positive at `z`
/// SEs; FAILS when some grid direction is negative at `z` SEs; otherwise
/// INCONCLUSIVE.
pub fn dominance_check(diff: &RiskDifference, z_threshold: f64) -> Result<DominanceReport> {
    let mean = &diff.mean;
    if !mean.is_symmetric(SYMMETRY_TOL) {
        return Err(Error::NotSymmetric {
            asymmetry: mean.asymmetry(),
        });
    }
    let eig = sym_eigen(mean)?;
    let p = mean.rows();
    let mut dir = eig.eigenvectors.column(0);
    // fix the sign: largest-magnitude component positive
    let pivot = dir
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .map(|(i, _)| i)
        .unwrap_or(0);
    if dir[pivot] < 0.0 {
        dir.iter_mut().for_each(|v| *v = -*v);
    }
    let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
    dir.iter_mut().for_each(|v| *v /= norm);
    let (_, projected_se) = diff.project(&dir);
    let min_eig = eig.min_eigenvalue();

    let alpha_grid_stats: Vec<AlphaStat> = alpha_grid(p)
        .into_iter()
        .map(|alpha| {
            let (value, se) = diff.project(&alpha);
            AlphaStat { alpha, value, se }
        })
        .collect();

    let grid_positive = alpha_grid_stats.iter().all(|s| s.value > z_threshold * s.se);
    let grid_negative = alpha_grid_stats.iter().any(|s| s.value < -z_threshold * s.se);
    let verdict = if min_eig > z_threshold * projected_se && grid_positive {
        Verdict::Dominates
    } else if grid_negative {
        Verdict::Fails
    } else {
        Verdict::Inconclusive
    };

    Ok(DominanceReport {
        diff_mean: diff.mean.clone(),
        diff_se: diff.se.clone(),
        min_eig,
        min_eig_dir: dir,
        projected_se,
        alpha_grid_stats,
        z_threshold,
        verdict,
    })
}

fn check_reps(reps: u64) -> Result<()> {
    if reps < 2 {
        return Err(Error::InvalidParameter(format!("reps must be at least 2, got {reps}")));
    }
    Ok(())
}

fn ensure_symmetric(m: &Mat) -> Result<()> {
    if m.is_symmetric(SYMMETRY_TOL) {
        Ok(())
    } else {
        Err(Error::NotSymmetric {
            asymmetry: m.asymmetry(),
        })
    }
}

/// Monte Carlo estimate of the matrix risk of one estimator.
pub fn mc_matrix_risk(model: &ModelSpec, spec: &EstimatorSpec, reps: u64, seed: &SeedSpec) -> Result<RiskEstimate> {
    check_reps(reps)?;
    let sampler = Sampler::new(model)?;
    let est = PreparedEstimator::new(*spec, model)?;
    let k = vech_len(model.p);
    let moments = replicate::run(reps, &[k], |r, out| {
        let draw = sampler.draw(seed, r);
        let loss = matrix_loss(&est.estimate(&draw)?, &model.theta)?;
        write_vech(&loss, out);
        Ok(())
    })?;
    let s = SymSummary::from_moments(&moments[0], model.p);
    ensure_symmetric(&s.mean)?;
    Ok(RiskEstimate {
        mean: s.mean,
        se: s.se,
        reps,
        seed: *seed,
        vech_cov: s.vech_cov,
    })
}

/// Risk of an estimator and its common-random-numbers difference from the
/// MLE, from a single pass over the draws.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedRisk {
    pub risk: RiskEstimate,
    pub diff: RiskDifference,
}

pub fn paired_risk(model: &ModelSpec, spec: &EstimatorSpec, reps: u64, seed: &SeedSpec) -> Result<PairedRisk> {
    check_reps(reps)?;
    let sampler = Sampler::new(model)?;
    let est = PreparedEstimator::new(*spec, model)?;
    let p = model.p;
    let k = vech_len(p);
    let moments = replicate::run(reps, &[k, k], |r, out| {
        let draw = sampler.draw(seed, r);
        let loss0 = gram(&draw.x.sub(&model.theta)?);
        let loss_a = matrix_loss(&est.estimate(&draw)?, &model.theta)?;
        let (risk_out, diff_out) = out.split_at_mut(k);
        write_vech(&loss_a, risk_out);
        write_vech(&loss0, diff_out);
        for (d, la) in diff_out.iter_mut().zip(risk_out.iter()) {
            *d -= la;
        }
        Ok(())
    })?;
    let risk = SymSummary::from_moments(&moments[0], p);
    let diff = SymSummary::from_moments(&moments[1], p);
    ensure_symmetric(&risk.mean)?;
    ensure_symmetric(&diff.mean)?;
    Ok(PairedRisk {
        risk: RiskEstimate {
            mean: risk.mean,
            se: risk.se,
            reps,
            seed: *seed,
            vech_cov: risk.vech_cov,
        },
        diff: RiskDifference {
            mean: diff.mean,
            se: diff.se,
            reps,
            vech_cov: Some(diff.vech_cov),
        },
    })
}

/// `R₀ − R_a` estimated on common draws.
pub fn paired_risk_difference(model: &ModelSpec, spec_a: &EstimatorSpec, reps: u64, seed: &SeedSpec) -> Result<RiskDifference> {
    Ok(paired_risk(model, spec_a, reps, seed)?.diff)
}

/// Paired dominance reports for each tuning constant, all computed from the
/// same draws.
pub fn tuning_sweep(
    model: &ModelSpec,
    base: &EstimatorSpec,
    a_values: &[f64],
    reps: u64,
    seed: &SeedSpec,
    z_threshold: f64,
) -> Result<Vec<(f64, DominanceReport)>> {
    if a_values.is_empty() {
        return Err(Error::InvalidParameter("a grid must not be empty".into()));
    }
    check_reps(reps)?;
    let sampler = Sampler::new(model)?;
    let estimators = a_values
        .iter()
        .map(|&a| PreparedEstimator::new(base.with_a(a), model))
        .collect::<Result<Vec<_>>>()?;
    let p = model.p;
    let k = vech_len(p);
    let dims = vec![k; a_values.len()];
    let moments = replicate::run(reps, &dims, |r, out| {
        let draw = sampler.draw(seed, r);
        let mut loss0 = vec![0.0; k];
        write_vech(&gram(&draw.x.sub(&model.theta)?), &mut loss0);
        for (est, chunk) in estimators.iter().zip(out.chunks_exact_mut(k)) {
            let loss_a = matrix_loss(&est.estimate(&draw)?, &model.theta)?;
            write_vech(&loss_a, chunk);
            for (d, l0) in chunk.iter_mut().zip(&loss0) {
                *d = l0 - *d;
            }
        }
        Ok(())
    })?;
    a_values
        .iter()
        .zip(&moments)
        .map(|(&a, m)| {
            let s = SymSummary::from_moments(m, p);
            let diff = RiskDifference {
                mean: s.mean,
                se: s.se,
                reps,
                vech_cov: Some(s.vech_cov),
            };
            Ok((a, dominance_check(&diff, z_threshold)?))
        })
        .collect()
}
