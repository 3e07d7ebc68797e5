//! Cholesky factorization of symmetric positive definite matrices, exact
//! Gaussian sampling in precision or covariance form, and the thin-plate
//! spline covariance used for the smooth component.
//!
//! The factorization works on the envelope (profile) of the lower triangle:
//! row `i` of the factor is stored contiguously from its first structural
//! nonzero to the diagonal. Envelope Cholesky produces no fill outside the
//! envelope, so a row-major grid precision with bandwidth `nx` factors in
//! `O(n · nx²)`; a dense matrix is the special case of a full envelope.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use nalgebra_sparse::CsrMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::grid::GridGraph;

/// Lower Cholesky factor `L` with `L Lᵀ = A`, stored by envelope rows.
#[derive(Debug, Clone)]
pub struct SpdFactor {
    n: usize,
    first: Vec<usize>,
    start: Vec<usize>,
    vals: Vec<f64>,
}

const PIVOT_RTOL: f64 = 64.0 * f64::EPSILON;

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let k = 4 * c;
        acc[0] += a[k] * b[k];
        acc[1] += a[k + 1] * b[k + 1];
        acc[2] += a[k + 2] * b[k + 2];
        acc[3] += a[k + 3] * b[k + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for k in 4 * chunks..a.len() {
        s += a[k] * b[k];
    }
    s
}

impl SpdFactor {
    fn with_envelope(first: Vec<usize>) -> Self {
        let n = first.len();
        let mut start = Vec::with_capacity(n + 1);
        let mut off = 0;
        for (i, &f) in first.iter().enumerate() {
            start.push(off);
            off += i + 1 - f;
        }
        start.push(off);
        SpdFactor { n, first, start, vals: vec![0.0; off] }
    }

    #[inline]
    fn row(&self, i: usize) -> &[f64] {
        &self.vals[self.start[i]..self.start[i + 1]]
    }

    /// Entry `L[i][j]` (zero outside the envelope).
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        if j > i || j < self.first[i] {
            0.0
        } else {
            self.vals[self.start[i] + j - self.first[i]]
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Number of stored entries of the factor.
    pub fn stored(&self) -> usize {
        self.vals.len()
    }

    // In-place envelope Cholesky; the envelope rows must already hold the
    // lower triangle of A.
    fn factor_in_place(&mut self) -> Result<()> {
        for i in 0..self.n {
            let fi = self.first[i];
            let si = self.start[i];
            for j in fi..i {
                let fj = self.first[j];
                let lo = fi.max(fj);
                let sj = self.start[j];
                let s = {
                    let ri = &self.vals[si + lo - fi..si + j - fi];
                    let rj = &self.vals[sj + lo - fj..sj + j - fj];
                    dot(ri, rj)
                };
                let djj = self.vals[sj + j - fj];
                let v = &mut self.vals[si + j - fi];
                *v = (*v - s) / djj;
            }
            let row = &self.vals[si..si + i - fi];
            let aii = self.vals[si + i - fi];
            let d = aii - dot(row, row);
            // pivots lost to cancellation count as singular
            if !(d > PIVOT_RTOL * aii) || !d.is_finite() {
                return Err(Error::NotSpd { pivot: i });
            }
            self.vals[si + i - fi] = d.sqrt();
        }
        Ok(())
    }

    /// Factorizes a dense symmetric matrix (only the lower triangle is read).
    pub fn from_dense(a: &DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::DimensionMismatch { expected: n, found: a.ncols() });
        }
        let first: Vec<usize> = (0..n)
            .map(|i| (0..i).find(|&j| a[(i, j)] != 0.0).unwrap_or(i))
            .collect();
        let mut f = Self::with_envelope(first);
        for i in 0..n {
            let (fi, si) = (f.first[i], f.start[i]);
            for j in fi..=i {
                f.vals[si + j - fi] = a[(i, j)];
            }
        }
        f.factor_in_place()?;
        Ok(f)
    }

    /// Factorizes a sparse symmetric matrix (entries above the diagonal are ignored).
    pub fn from_csr(a: &CsrMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::DimensionMismatch { expected: n, found: a.ncols() });
        }
        let first: Vec<usize> = (0..n)
            .map(|i| {
                let row = a.row(i);
                row.col_indices()
                    .iter()
                    .zip(row.values())
                    .filter(|(&c, &v)| c <= i && v != 0.0)
                    .map(|(&c, _)| c)
                    .min()
                    .unwrap_or(i)
            })
            .collect();
        let mut f = Self::with_envelope(first);
        for i in 0..n {
            let (fi, si) = (f.first[i], f.start[i]);
            let row = a.row(i);
            for (&c, &v) in row.col_indices().iter().zip(row.values()) {
                if c <= i {
                    f.vals[si + c - fi] += v;
                }
            }
        }
        f.factor_in_place()?;
        Ok(f)
    }

    /// Solves `L y = b` in place.
    pub fn solve_lower_in_place(&self, b: &mut [f64]) {
        assert_eq!(b.len(), self.n);
        for i in 0..self.n {
            let fi = self.first[i];
            let row = self.row(i);
            let s = dot(&row[..i - fi], &b[fi..i]);
            b[i] = (b[i] - s) / row[i - fi];
        }
    }

    /// Solves `Lᵀ x = y` in place.
    pub fn solve_upper_in_place(&self, y: &mut [f64]) {
        assert_eq!(y.len(), self.n);
        for i in (0..self.n).rev() {
            let fi = self.first[i];
            let row = self.row(i);
            let xi = y[i] / row[i - fi];
            y[i] = xi;
            for (yk, l) in y[fi..i].iter_mut().zip(&row[..i - fi]) {
                *yk -= l * xi;
            }
        }
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, found: b.len() });
        }
        let mut x = b.to_vec();
        self.solve_lower_in_place(&mut x);
        self.solve_upper_in_place(&mut x);
        Ok(x)
    }

    /// `log det A`.
    pub fn log_det(&self) -> f64 {
        (0..self.n).map(|i| 2.0 * self.entry(i, i).ln()).sum()
    }

    /// Dense copy of `L`.
    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.entry(i, j))
    }
}

/// Factorizes a symmetric positive definite sparse matrix.
pub fn spd_factorize(a: &CsrMatrix<f64>) -> Result<SpdFactor> {
    SpdFactor::from_csr(a)
}

pub fn standard_normals<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// One draw from `N(A⁻¹ b, A⁻¹)` given the factor of `A`.
///
/// With `A = L Lᵀ` the draw is `L⁻ᵀ (L⁻¹ b + z)` for `z ~ N(0, I)`, which has
/// mean `A⁻¹ b` and covariance `L⁻ᵀ L⁻¹ = A⁻¹`. Exactly `n` standard normals
/// are consumed, in index order.
pub fn sample_gaussian_precision<R: Rng + ?Sized>(
    factor: &SpdFactor,
    b: &[f64],
    rng: &mut R,
) -> Result<Vec<f64>> {
    let z = standard_normals(factor.dim(), rng);
    sample_gaussian_precision_with(factor, b, &z)
}

/// As [`sample_gaussian_precision`] with caller-supplied standard normals.
pub fn sample_gaussian_precision_with(factor: &SpdFactor, b: &[f64], z: &[f64]) -> Result<Vec<f64>> {
    let n = factor.dim();
    if b.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: b.len() });
    }
    if z.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: z.len() });
    }
    let mut w = b.to_vec();
    factor.solve_lower_in_place(&mut w);
    for (wi, zi) in w.iter_mut().zip(z) {
        *wi += zi;
    }
    factor.solve_upper_in_place(&mut w);
    Ok(w)
}

/// Sampler for `N(mean, Σ)` from a dense covariance.
#[derive(Debug, Clone)]
pub struct CovarianceSampler {
    mean: DVector<f64>,
    chol: DMatrix<f64>,
}

impl CovarianceSampler {
    pub fn new(mean: DVector<f64>, cov: &DMatrix<f64>) -> Result<Self> {
        if cov.nrows() != mean.len() {
            return Err(Error::DimensionMismatch { expected: mean.len(), found: cov.nrows() });
        }
        let f = SpdFactor::from_dense(cov)?;
        Ok(CovarianceSampler { mean, chol: f.to_dense() })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let z = DVector::from_vec(standard_normals(self.mean.len(), rng));
        &self.mean + &self.chol * z
    }
}

/// Thin-plate spline covariance on a grid.
///
/// `K` is built from `φ(r) = r² log r` on unit-square coordinates, projected
/// onto the orthogonal complement of the span of `[1, x, y]`, clipped to be
/// positive semidefinite, normalized to unit mean diagonal and finally scaled
/// by `variance`. `M = V diag(√λ)` from the eigendecomposition of `K`, so
/// `M Mᵀ = K` and the columns of `M` span the same space as `K`.
#[derive(Debug, Clone)]
pub struct TpsKernel {
    pub coords: Vec<(f64, f64)>,
    pub k: DMatrix<f64>,
    pub m: DMatrix<f64>,
    pub variance: f64,
    /// Eigenvalues of `K`, ascending, after clipping.
    pub eigenvalues: DVector<f64>,
}

/// Radial thin-plate function with `φ(0) = 0`.
pub fn tps_phi(r: f64) -> f64 {
    if r <= 0.0 {
        0.0
    } else {
        r * r * r.ln()
    }
}

/// Design matrix `[1, x, y]` on unit-square coordinates.
pub fn linear_design(grid: &GridGraph) -> DMatrix<f64> {
    let coords = grid.unit_coords();
    DMatrix::from_fn(grid.n(), 3, |i, j| match j {
        0 => 1.0,
        1 => coords[i].0,
        _ => coords[i].1,
    })
}

/// `X (XᵀX)⁻¹ Xᵀ`.
pub fn projection(x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let xtx = x.transpose() * x;
    let cols = x.ncols();
    let inv = xtx
        .clone()
        .cholesky()
        .ok_or(Error::RankDeficientDesign { rank: x.rank(1e-10), cols })?
        .inverse();
    Ok(x * inv * x.transpose())
}

pub fn build_tps_kernel(grid: &GridGraph, variance: f64) -> Result<TpsKernel> {
    if !(variance > 0.0) || !variance.is_finite() {
        return Err(Error::Kernel(format!("variance must be positive, got {variance}")));
    }
    let coords = grid.unit_coords();
    let n = coords.len();
    let raw = DMatrix::from_fn(n, n, |i, j| {
        let (dx, dy) = (coords[i].0 - coords[j].0, coords[i].1 - coords[j].1);
        tps_phi((dx * dx + dy * dy).sqrt())
    });
    let px = projection(&linear_design(grid))?;
    let resid = DMatrix::identity(n, n) - px;
    let mut kp = &resid * raw * &resid;
    kp = (&kp + kp.transpose()) * 0.5;

    let eig = SymmetricEigen::new(kp);
    let lmax = eig.eigenvalues.max();
    let lmin = eig.eigenvalues.min();
    if !(lmax > 0.0) || !lmax.is_finite() {
        return Err(Error::Kernel("projected kernel has no positive spectrum".into()));
    }
    if lmin < -1e-6 * lmax {
        return Err(Error::Kernel(format!(
            "projected kernel is indefinite (min eigenvalue {lmin:e}, max {lmax:e})"
        )));
    }
    let clipped: Vec<f64> = eig.eigenvalues.iter().map(|&l| l.max(0.0)).collect();
    let mean_diag = clipped.iter().sum::<f64>() / n as f64;
    let scale = variance / mean_diag;

    // ascending order
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| clipped[a].total_cmp(&clipped[b]));
    let vals = DVector::from_iterator(n, order.iter().map(|&i| clipped[i] * scale));
    let vecs = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);

    let m = DMatrix::from_fn(n, n, |r, c| vecs[(r, c)] * vals[c].sqrt());
    let mut k = &m * m.transpose();
    k = (&k + k.transpose()) * 0.5;
    Ok(TpsKernel { coords, k, m, variance, eigenvalues: vals })
}
