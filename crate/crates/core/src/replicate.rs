//! Deterministic parallel replication with streaming moment accumulation.
//!
//! Replicates are grouped into fixed blocks of [`BLOCK_SIZE`] indices. Each
//! block is accumulated sequentially in index order and blocks are merged
//! in block order, so the result does not depend on how many threads rayon
//! uses or how it schedules the blocks.

use rayon::prelude::*;

use crate::error::{Error, Result};

pub const BLOCK_SIZE: u64 = 1024;

/// Running mean and co-moment matrix of a fixed-length vector statistic.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    count: u64,
    mean: Vec<f64>,
    /// Row-major `dim × dim` sum of centered cross products.
    comoment: Vec<f64>,
}

impl Moments {
    pub fn new(dim: usize) -> Self {
        Self {
            count: 0,
            mean: vec![0.0; dim],
            comoment: vec![0.0; dim * dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Welford update. `scratch` must have length `dim`.
    pub fn push(&mut self, x: &[f64], scratch: &mut [f64]) {
        debug_assert_eq!(x.len(), self.dim());
        self.count += 1;
        let inv = 1.0 / self.count as f64;
        for ((d, &xi), m) in scratch.iter_mut().zip(x).zip(self.mean.iter_mut()) {
            *d = xi - *m;
            *m += *d * inv;
        }
        let dim = self.dim();
        for i in 0..dim {
            let di = scratch[i];
            let row = &mut self.comoment[i * dim..(i + 1) * dim];
            for j in i..dim {
                row[j] += di * (x[j] - self.mean[j]);
            }
        }
    }

    /// Chan et al. pairwise combination.
    pub fn merge(&mut self, other: &Moments) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = other.clone();
            return;
        }
        let na = self.count as f64;
        let nb = other.count as f64;
        let n = na + nb;
        let dim = self.dim();
        let delta: Vec<f64> = other
            .mean
            .iter()
            .zip(&self.mean)
            .map(|(b, a)| b - a)
            .collect();
        let w = na * nb / n;
        for i in 0..dim {
            for j in i..dim {
                self.comoment[i * dim + j] +=
                    other.comoment[i * dim + j] + delta[i] * delta[j] * w;
            }
        }
        for (m, d) in self.mean.iter_mut().zip(&delta) {
            *m += d * nb / n;
        }
        self.count += other.count;
    }

    /// Sample covariance (denominator `count − 1`), full symmetric.
    pub fn covariance(&self) -> Vec<f64> {
        let dim = self.dim();
        let denom = (self.count.max(2) - 1) as f64;
        let mut cov = vec![0.0; dim * dim];
        for i in 0..dim {
            for j in i..dim {
                let v = self.comoment[i * dim + j] / denom;
                cov[i * dim + j] = v;
                cov[j * dim + i] = v;
            }
        }
        cov
    }

    pub fn variance(&self, i: usize) -> f64 {
        let denom = (self.count.max(2) - 1) as f64;
        self.comoment[i * self.dim() + i] / denom
    }

    /// Standard error of the mean of component `i`.
    pub fn std_error(&self, i: usize) -> f64 {
        (self.variance(i).max(0.0) / self.count as f64).sqrt()
    }

    /// Mean and standard error of the linear combination `Σ c_i x_i`.
    pub fn linear_combination(&self, c: &[f64]) -> (f64, f64) {
        let dim = self.dim();
        let value = c.iter().zip(&self.mean).map(|(a, b)| a * b).sum();
        let cov = self.covariance();
        let mut var = 0.0;
        for i in 0..dim {
            for j in 0..dim {
                var += c[i] * cov[i * dim + j] * c[j];
            }
        }
        (value, (var.max(0.0) / self.count as f64).sqrt())
    }
}

/// Runs `reps` replicates of `body`, which writes one statistic vector per
/// group into its output slices, and returns the per-group moments.
///
/// `body(replicate, out)` receives `out` of length `group_dims.iter().sum()`.
/// The first failing replicate (lowest index) aborts the run.
pub fn run<F>(reps: u64, group_dims: &[usize], body: F) -> Result<Vec<Moments>>
where
    F: Fn(u64, &mut [f64]) -> Result<()> + Sync,
{
    let total: usize = group_dims.iter().sum();
    let n_blocks = reps.div_ceil(BLOCK_SIZE);

    let block_results: Vec<Result<Vec<Moments>>> = (0..n_blocks)
        .into_par_iter()
        .map(|b| {
            let start = b * BLOCK_SIZE;
            let end = (start + BLOCK_SIZE).min(reps);
            let mut groups: Vec<Moments> = group_dims.iter().map(|&d| Moments::new(d)).collect();
            let mut out = vec![0.0; total];
            let mut scratch = vec![0.0; group_dims.iter().copied().max().unwrap_or(0)];
            for r in start..end {
                body(r, &mut out).map_err(|e| Error::Replicate {
                    index: r,
                    source: Box::new(e),
                })?;
                let mut offset = 0;
                for (g, &d) in groups.iter_mut().zip(group_dims) {
                    g.push(&out[offset..offset + d], &mut scratch[..d]);
                    offset += d;
                }
            }
            Ok(groups)
        })
        .collect();

    let mut acc: Vec<Moments> = group_dims.iter().map(|&d| Moments::new(d)).collect();
    for block in block_results {
        for (a, b) in acc.iter_mut().zip(block?) {
            a.merge(&b);
        }
    }
    Ok(acc)
}

/// Runs `f` on a dedicated rayon pool with `threads` workers.
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::InvalidParameter(format!("cannot build thread pool: {e}")))?;
    Ok(pool.install(f))
}
