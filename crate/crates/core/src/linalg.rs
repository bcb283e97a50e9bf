//! Small dense real matrices and a cyclic Jacobi symmetric eigensolver.
//!
//! Sized for the problems this crate deals with (p up to ~20, n up to ~1000).
//! Storage is row-major. Every routine is a pure function of its inputs, so
//! results are bit-reproducible for a given input.

use std::fmt;
use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Convergence threshold on the off-diagonal Frobenius norm, relative to ‖M‖_F.
const JACOBI_TOL: f64 = 1e-12;
const JACOBI_MAX_SWEEPS: usize = 100;
/// Relative tolerance for accepting a matrix as symmetric.
const SYMMETRY_TOL: f64 = 1e-10;

/// Dense row-major real matrix.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMat")]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[derive(Deserialize)]
struct RawMat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl TryFrom<RawMat> for Mat {
    type Error = Error;

    fn try_from(raw: RawMat) -> Result<Self> {
        Mat::from_vec(raw.rows, raw.cols, raw.data)
    }
}

impl fmt::Debug for Mat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Mat {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            writeln!(f, "  {:?}", self.row(r))?;
        }
        write!(f, "]")
    }
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_diag(d: &[f64]) -> Self {
        let mut m = Self::zeros(d.len(), d.len());
        for (i, &v) in d.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    /// Builds a matrix from row-major data.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidParameter(format!(
                "matrix dimensions must be positive, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "entry ({}, {})",
                pos / cols,
                pos % cols
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != ncols) {
            return Err(Error::DimensionMismatch(format!(
                "row {bad} has {} entries, expected {ncols}",
                rows[bad].len()
            )));
        }
        Self::from_vec(nrows, ncols, rows.concat())
    }

    /// Single-column matrix.
    pub fn column_vector(v: &[f64]) -> Result<Self> {
        Self::from_vec(v.len(), 1, v.to_vec())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    /// Row-major entries.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self[(r, c)]).collect()
    }

    pub fn set_column(&mut self, c: usize, v: &[f64]) {
        assert_eq!(v.len(), self.rows, "column length mismatch");
        for (r, &x) in v.iter().enumerate() {
            self[(r, c)] = x;
        }
    }

    /// Squared Euclidean norm of column `c`.
    pub fn column_norm_sq(&self, c: usize) -> f64 {
        (0..self.rows).map(|r| self[(r, c)] * self[(r, c)]).sum()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t[(c, r)] = self[(r, c)];
            }
        }
        t
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    pub fn trace(&self) -> f64 {
        self.diagonal().iter().sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn add(&self, other: &Mat) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Mat) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    fn zip_with(&self, other: &Mat, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.shape() != other.shape() {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// Quadratic form vᵀ M v.
    pub fn quad_form(&self, v: &[f64]) -> f64 {
        assert!(self.is_square() && v.len() == self.rows);
        let mut acc = 0.0;
        for i in 0..self.rows {
            let row = self.row(i);
            let inner: f64 = row.iter().zip(v).map(|(m, x)| m * x).sum();
            acc += v[i] * inner;
        }
        acc
    }

    /// Largest absolute asymmetry |M_ij − M_ji|.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    pub fn is_symmetric(&self, rel_tol: f64) -> bool {
        self.is_square() && self.asymmetry() <= rel_tol * self.max_abs().max(1.0)
    }
}

impl Index<(usize, usize)> for Mat {
    type Output = f64;

    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for Mat {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }
}

/// Matrix product `a · b`.
pub fn matmul(a: &Mat, b: &Mat) -> Result<Mat> {
    if a.cols != b.rows {
        return Err(Error::DimensionMismatch(format!(
            "cannot multiply {}x{} by {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let mut out = Mat::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        let arow = a.row(i);
        let orow = &mut out.data[i * b.cols..(i + 1) * b.cols];
        for (k, &aik) in arow.iter().enumerate() {
            let brow = &b.data[k * b.cols..(k + 1) * b.cols];
            for (o, &bkj) in orow.iter_mut().zip(brow) {
                *o += aik * bkj;
            }
        }
    }
    Ok(out)
}

/// Gram matrix XᵀX. The result is exactly symmetric.
pub fn gram(x: &Mat) -> Mat {
    let p = x.cols;
    let mut s = Mat::zeros(p, p);
    for r in 0..x.rows {
        let row = x.row(r);
        for j in 0..p {
            for k in j..p {
                s[(j, k)] += row[j] * row[k];
            }
        }
    }
    for j in 0..p {
        for k in 0..j {
            s[(j, k)] = s[(k, j)];
        }
    }
    s
}

/// Eigendecomposition of a symmetric matrix, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct SymEig {
    pub eigenvalues: Vec<f64>,
    /// Orthonormal eigenvectors stored as columns, in eigenvalue order.
    pub eigenvectors: Mat,
}

impl SymEig {
    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues[0]
    }

    pub fn max_eigenvalue(&self) -> f64 {
        *self.eigenvalues.last().expect("non-empty spectrum")
    }

    /// V f(Λ) Vᵀ.
    pub fn apply_spectral(&self, f: impl Fn(f64) -> f64) -> Mat {
        let p = self.eigenvalues.len();
        let v = &self.eigenvectors;
        let fl: Vec<f64> = self.eigenvalues.iter().map(|&l| f(l)).collect();
        let mut out = Mat::zeros(p, p);
        for i in 0..p {
            for j in i..p {
                let mut acc = 0.0;
                for (k, &fk) in fl.iter().enumerate() {
                    acc += v[(i, k)] * fk * v[(j, k)];
                }
                out[(i, j)] = acc;
                out[(j, i)] = acc;
            }
        }
        out
    }
}

/// Cyclic Jacobi eigensolver for symmetric matrices.
///
/// Rotations sweep the strict upper triangle in row-major order until the
/// off-diagonal Frobenius norm drops below `1e-12·‖M‖_F`.
pub fn sym_eigen(m: &Mat) -> Result<SymEig> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "eigendecomposition needs a square matrix, got {}x{}",
            m.rows, m.cols
        )));
    }
    if !m.is_symmetric(SYMMETRY_TOL) {
        return Err(Error::NotSymmetric {
            asymmetry: m.asymmetry(),
        });
    }
    let p = m.rows;
    let mut a = m.clone();
    // Symmetrize exactly so rotations act on a consistent matrix.
    for i in 0..p {
        for j in (i + 1)..p {
            let avg = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = avg;
            a[(j, i)] = avg;
        }
    }
    let mut v = Mat::identity(p);
    let tol = JACOBI_TOL * a.frobenius_norm();

    let off_norm = |a: &Mat| -> f64 {
        let mut s = 0.0;
        for i in 0..p {
            for j in (i + 1)..p {
                s += 2.0 * a[(i, j)] * a[(i, j)];
            }
        }
        s.sqrt()
    };

    let mut converged = off_norm(&a) <= tol;
    let mut sweeps = 0;
    while !converged && sweeps < JACOBI_MAX_SWEEPS {
        for ip in 0..p {
            for iq in (ip + 1)..p {
                let apq = a[(ip, iq)];
                if apq == 0.0 {
                    continue;
                }
                let app = a[(ip, ip)];
                let aqq = a[(iq, iq)];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                for k in 0..p {
                    let akp = a[(k, ip)];
                    let akq = a[(k, iq)];
                    a[(k, ip)] = c * akp - s * akq;
                    a[(k, iq)] = s * akp + c * akq;
                }
                for k in 0..p {
                    let apk = a[(ip, k)];
                    let aqk = a[(iq, k)];
                    a[(ip, k)] = c * apk - s * aqk;
                    a[(iq, k)] = s * apk + c * aqk;
                }
                a[(ip, iq)] = 0.0;
                a[(iq, ip)] = 0.0;

                for k in 0..p {
                    let vkp = v[(k, ip)];
                    let vkq = v[(k, iq)];
                    v[(k, ip)] = c * vkp - s * vkq;
                    v[(k, iq)] = s * vkp + c * vkq;
                }
            }
        }
        sweeps += 1;
        converged = off_norm(&a) <= tol;
    }
    if !converged {
        return Err(Error::NoConvergence {
            sweeps: JACOBI_MAX_SWEEPS,
        });
    }

    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]));
    let eigenvalues = order.iter().map(|&i| a[(i, i)]).collect();
    let mut eigenvectors = Mat::zeros(p, p);
    for (dst, &src) in order.iter().enumerate() {
        for k in 0..p {
            eigenvectors[(k, dst)] = v[(k, src)];
        }
    }
    Ok(SymEig {
        eigenvalues,
        eigenvectors,
    })
}

/// Decomposes `m` and rejects it unless its spectrum is safely positive.
fn checked_spd_eigen(m: &Mat) -> Result<SymEig> {
    let eig = sym_eigen(m)?;
    let p = m.rows as f64;
    let min = eig.min_eigenvalue();
    let max = eig.max_eigenvalue();
    if !(max > 0.0) || min <= p * 1e-12 * max {
        return Err(Error::Singular {
            min_eigenvalue: min,
        });
    }
    Ok(eig)
}

/// Lower Cholesky factor of an SPD matrix.
fn cholesky(m: &Mat) -> Result<Mat> {
    let p = m.rows;
    let mut l = Mat::zeros(p, p);
    for j in 0..p {
        let mut d = m[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > 0.0) {
            return Err(Error::Singular { min_eigenvalue: d });
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in (j + 1)..p {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / djj;
        }
    }
    Ok(l)
}

/// Solves `M · out = B` for symmetric positive definite `M`.
///
/// `M` is rejected as singular when its smallest eigenvalue is at most
/// `p·1e-12` times its largest.
pub fn solve_spd(m: &Mat, b: &Mat) -> Result<Mat> {
    if !m.is_square() || m.rows != b.rows {
        return Err(Error::DimensionMismatch(format!(
            "cannot solve {}x{} system against {}x{} right-hand side",
            m.rows, m.cols, b.rows, b.cols
        )));
    }
    checked_spd_eigen(m)?;
    let l = cholesky(m)?;
    let p = m.rows;
    let mut out = b.clone();
    for c in 0..b.cols {
        // forward: L y = b
        for i in 0..p {
            let mut s = out[(i, c)];
            for k in 0..i {
                s -= l[(i, k)] * out[(k, c)];
            }
            out[(i, c)] = s / l[(i, i)];
        }
        // backward: Lᵀ x = y
        for i in (0..p).rev() {
            let mut s = out[(i, c)];
            for k in (i + 1)..p {
                s -= l[(k, i)] * out[(k, c)];
            }
            out[(i, c)] = s / l[(i, i)];
        }
    }
    Ok(out)
}

/// Symmetric inverse square root Σ^{-1/2}, so that A·Aᵀ = Σ⁻¹.
pub fn spd_sqrt_inv(sigma: &Mat) -> Result<Mat> {
    let eig = checked_spd_eigen(sigma)?;
    Ok(eig.apply_spectral(|l| 1.0 / l.sqrt()))
}

/// Symmetric square root Σ^{1/2}.
pub fn spd_sqrt(sigma: &Mat) -> Result<Mat> {
    let eig = checked_spd_eigen(sigma)?;
    Ok(eig.apply_spectral(f64::sqrt))
}
