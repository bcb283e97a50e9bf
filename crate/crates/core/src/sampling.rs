//! Reproducible draws from the matrix normal model.
//!
//! Every replicate gets its own ChaCha8 stream: the 256-bit key is derived
//! from `(master_seed, stream_id)` with SplitMix64 and the ChaCha stream
//! number is the replicate index. A draw therefore depends only on
//! `(master_seed, stream_id, replicate)`.
//!
//! Standard normals come from `rand_distr::StandardNormal` (ziggurat), pinned
//! through the `rand_distr` 0.5 dependency. Values within a replicate are
//! consumed in a fixed order: the `n×p` noise matrix row by row, then for each
//! column `j` the `ν` normals whose squares make up `u_j`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{spd_sqrt, Mat};
use crate::replicate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedSpec {
    pub master_seed: u64,
    pub stream_id: u64,
}

impl SeedSpec {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        Self {
            master_seed,
            stream_id,
        }
    }

    /// Same master seed, different stream.
    pub fn with_stream(self, stream_id: u64) -> Self {
        Self { stream_id, ..self }
    }

    fn key(&self) -> [u8; 32] {
        let mut state = self.master_seed ^ self.stream_id.rotate_left(32).wrapping_mul(0xD6E8_FEB8_6659_FD93);
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        key
    }

    /// Generator for one replicate.
    pub fn rng(&self, replicate: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.key());
        rng.set_stream(replicate);
        rng
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceMode {
    Known { sigma2: f64 },
    /// σ² is estimated from an auxiliary `u_j ~ σ²χ²_ν` per column.
    Unknown { sigma2: f64, nu: u32 },
}

impl VarianceMode {
    pub fn sigma2(&self) -> f64 {
        match *self {
            VarianceMode::Known { sigma2 } | VarianceMode::Unknown { sigma2, .. } => sigma2,
        }
    }

    pub fn nu(&self) -> Option<u32> {
        match *self {
            VarianceMode::Known { .. } => None,
            VarianceMode::Unknown { nu, .. } => Some(nu),
        }
    }

    pub fn is_known(&self) -> bool {
        matches!(self, VarianceMode::Known { .. })
    }
}

/// Ground truth for a simulation: `X = Θ + noise`.
///
/// Without `row_cov` all entries are independent `N(θ_ij, σ²)`. With
/// `row_cov = Σ` the rows are independent `N_p(θ_(i·), σ²Σ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub n: usize,
    pub p: usize,
    pub theta: Mat,
    pub variance: VarianceMode,
    pub row_cov: Option<Mat>,
}

impl ModelSpec {
    pub fn new(theta: Mat, variance: VarianceMode, row_cov: Option<Mat>) -> Result<Self> {
        let model = Self {
            n: theta.rows(),
            p: theta.cols(),
            theta,
            variance,
            row_cov,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn known(theta: Mat, sigma2: f64) -> Result<Self> {
        Self::new(theta, VarianceMode::Known { sigma2 }, None)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.p == 0 {
            return Err(Error::InvalidParameter("n and p must be at least 1".into()));
        }
        if self.theta.shape() != (self.n, self.p) {
            return Err(Error::DimensionMismatch(format!(
                "theta is {}x{}, model is {}x{}",
                self.theta.rows(),
                self.theta.cols(),
                self.n,
                self.p
            )));
        }
        let sigma2 = self.variance.sigma2();
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(Error::InvalidParameter(format!("sigma2 must be positive, got {sigma2}")));
        }
        if self.variance.nu() == Some(0) {
            return Err(Error::InvalidParameter("nu must be at least 1".into()));
        }
        if let Some(cov) = &self.row_cov {
            if cov.shape() != (self.p, self.p) {
                return Err(Error::DimensionMismatch(format!(
                    "row covariance is {}x{}, expected {}x{}",
                    cov.rows(),
                    cov.cols(),
                    self.p,
                    self.p
                )));
            }
            if !self.variance.is_known() {
                return Err(Error::InvalidParameter(
                    "row covariance requires known variance".into(),
                ));
            }
            spd_sqrt(cov)?;
        }
        Ok(())
    }

    /// Noncentrality ‖θ_(j)‖²/σ² of each column.
    pub fn column_noncentralities(&self) -> Vec<f64> {
        let s2 = self.variance.sigma2();
        (0..self.p).map(|j| self.theta.column_norm_sq(j) / s2).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Draw {
    pub x: Mat,
    pub u: Option<Vec<f64>>,
}

/// Precomputed sampling state for one model.
#[derive(Debug, Clone)]
pub struct Sampler<'a> {
    model: &'a ModelSpec,
    sigma: f64,
    row_root: Option<Mat>,
}

impl<'a> Sampler<'a> {
    pub fn new(model: &'a ModelSpec) -> Result<Self> {
        model.validate()?;
        let row_root = model.row_cov.as_ref().map(spd_sqrt).transpose()?;
        Ok(Self {
            model,
            sigma: model.variance.sigma2().sqrt(),
            row_root,
        })
    }

    pub fn draw(&self, seed: &SeedSpec, replicate: u64) -> Draw {
        let mut rng = seed.rng(replicate);
        self.draw_with(&mut rng)
    }

    pub fn draw_with<R: Rng>(&self, rng: &mut R) -> Draw {
        let ModelSpec { n, p, theta, .. } = self.model;
        let (n, p) = (*n, *p);
        let mut x = Mat::zeros(n, p);
        let mut z = vec![0.0; p];
        for i in 0..n {
            for zj in z.iter_mut() {
                *zj = rng.sample(StandardNormal);
            }
            match &self.row_root {
                None => {
                    for j in 0..p {
                        x[(i, j)] = theta[(i, j)] + self.sigma * z[j];
                    }
                }
                Some(root) => {
                    for j in 0..p {
                        let noise: f64 = (0..p).map(|k| root[(j, k)] * z[k]).sum();
                        x[(i, j)] = theta[(i, j)] + self.sigma * noise;
                    }
                }
            }
        }
        let u = match self.model.variance {
            VarianceMode::Known { .. } => None,
            VarianceMode::Unknown { sigma2, nu } => Some(
                (0..p)
                    .map(|_| sigma2 * chi2_integer(rng, nu))
                    .collect(),
            ),
        };
        Draw { x, u }
    }
}

/// χ²_ν as a sum of ν squared standard normals.
fn chi2_integer<R: Rng>(rng: &mut R, nu: u32) -> f64 {
    (0..nu)
        .map(|_| {
            let z: f64 = rng.sample(StandardNormal);
            z * z
        })
        .sum()
}

/// One draw of the model for replicate `replicate` of `seed`.
pub fn draw(model: &ModelSpec, seed: &SeedSpec, replicate: u64) -> Result<Draw> {
    Ok(Sampler::new(model)?.draw(seed, replicate))
}

/// Monte Carlo mean of `1/‖x‖²` for `x ~ N_n(θ, I)` with `‖θ‖² = λ²`.
///
/// Returns `(estimate, standard error)`.
pub fn chi2_mean_inverse_mc(n: usize, lambda2: f64, reps: u64, seed: &SeedSpec) -> Result<(f64, f64)> {
    if n < 3 {
        return Err(Error::InvalidParameter(format!(
            "E[1/||x||^2] needs n >= 3 to be finite for the identity, got n = {n}"
        )));
    }
    if !(lambda2 >= 0.0) || reps == 0 {
        return Err(Error::InvalidParameter("lambda2 must be >= 0 and reps >= 1".into()));
    }
    let lambda = lambda2.sqrt();
    let moments = replicate::run(reps, &[1], |r, out| {
        let mut rng = seed.rng(r);
        let mut norm2 = 0.0;
        for i in 0..n {
            let mean = if i == 0 { lambda } else { 0.0 };
            let xi = mean + rng.sample::<f64, _>(StandardNormal);
            norm2 += xi * xi;
        }
        out[0] = 1.0 / norm2;
        Ok(())
    })?;
    Ok((moments[0].mean()[0], moments[0].std_error(0)))
}
