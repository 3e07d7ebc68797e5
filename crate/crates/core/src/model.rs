//! The orthogonalized hierarchical model: design, projections and the
//! rough-field precision `Q(λ²) = Dᵀ Λ⁻¹ D + E`.
//!
//! With `P_X = X (XᵀX)⁻¹ Xᵀ`, `Ψ = (I − P_X) M`,
//! `P_Ψ = Ψ (ΨᵀΨ + δI)⁻¹ Ψᵀ`, `J = (ΨᵀΨ + δI)⁻¹ Ψᵀ (I − P_X)` and
//! `H = (I − P_Ψ)(I − P_X)`, the observation model
//! `z = Xβ + My + γ + ε` is rewritten as `z = Xβ* + Ψy* + Hγ + ε` with
//! `y* | γ ~ N(Jγ, σ² I)`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use nalgebra_sparse::{CooMatrix, CsrMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{build_diff_matrix, DiffMatrix, DiffOrder, GridGraph};
use crate::linalg::{build_tps_kernel, linear_design, projection, SpdFactor, TpsKernel};

/// Precision weight placed on the anchored cell.
pub const DEFAULT_ANCHOR_WEIGHT: f64 = 1e10;

/// Prior information `E` that makes `Q` a valid precision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Anchor {
    /// `weight` added to one diagonal entry; pins that cell of γ near zero.
    Single { index: usize, weight: f64 },
    /// `delta · I`.
    Ridge { delta: f64 },
}

impl Anchor {
    /// Single anchor of weight 1e10 at the grid center.
    pub fn center(grid: &GridGraph) -> Self {
        Anchor::Single { index: grid.center(), weight: DEFAULT_ANCHOR_WEIGHT }
    }

    fn add_to<F: FnMut(usize, usize, f64)>(&self, n: usize, mut f: F) {
        match *self {
            Anchor::Single { index, weight } => f(index, index, weight),
            Anchor::Ridge { delta } => (0..n).for_each(|i| f(i, i, delta)),
        }
    }
}

fn check_lambda(d: &DiffMatrix, lambda2: &[f64]) -> Result<()> {
    if lambda2.len() != d.nrows() {
        return Err(Error::DimensionMismatch { expected: d.nrows(), found: lambda2.len() });
    }
    Ok(())
}

/// Assembles `Q = Dᵀ Λ⁻¹ D + E` without checking definiteness.
pub fn assemble_q(d: &DiffMatrix, lambda2: &[f64], anchor: &Anchor) -> Result<CsrMatrix<f64>> {
    check_lambda(d, lambda2)?;
    let n = d.ncols();
    let w: Vec<f64> = lambda2.iter().map(|l| 1.0 / l).collect();
    let mut coo = CooMatrix::new(n, n);
    d.for_each_gram_entry(&w, |a, b, v| coo.push(a, b, v));
    anchor.add_to(n, |a, b, v| coo.push(a, b, v));
    Ok(CsrMatrix::from(&coo))
}

/// Assembles `Q(λ²) + shift · I`.
pub fn assemble_q_shifted(d: &DiffMatrix, lambda2: &[f64], anchor: &Anchor, shift: f64) -> Result<CsrMatrix<f64>> {
    check_lambda(d, lambda2)?;
    let n = d.ncols();
    let w: Vec<f64> = lambda2.iter().map(|l| 1.0 / l).collect();
    let mut coo = CooMatrix::new(n, n);
    d.for_each_gram_entry(&w, |a, b, v| coo.push(a, b, v));
    anchor.add_to(n, |a, b, v| coo.push(a, b, v));
    (0..n).for_each(|i| coo.push(i, i, shift));
    Ok(CsrMatrix::from(&coo))
}

/// Builds `Q(λ²)` and its Cholesky factor.
pub fn build_q_factored(
    d: &DiffMatrix,
    lambda2: &[f64],
    anchor: &Anchor,
) -> Result<(CsrMatrix<f64>, SpdFactor)> {
    let q = assemble_q(d, lambda2, anchor)?;
    let f = SpdFactor::from_csr(&q).map_err(|e| match e {
        Error::NotSpd { pivot } => Error::AnchoringInsufficient { pivot },
        other => other,
    })?;
    Ok((q, f))
}

/// Builds `Q(λ²)`, failing when the anchoring leaves it singular.
pub fn build_q(d: &DiffMatrix, lambda2: &[f64], anchor: &Anchor) -> Result<CsrMatrix<f64>> {
    build_q_factored(d, lambda2, anchor).map(|(q, _)| q)
}

/// Adds `Q(λ²)` into a dense matrix.
pub fn add_q_to_dense(
    d: &DiffMatrix,
    lambda2: &[f64],
    anchor: &Anchor,
    target: &mut DMatrix<f64>,
) -> Result<()> {
    check_lambda(d, lambda2)?;
    let w: Vec<f64> = lambda2.iter().map(|l| 1.0 / l).collect();
    d.for_each_gram_entry(&w, |a, b, v| target[(a, b)] += v);
    anchor.add_to(d.ncols(), |a, b, v| target[(a, b)] += v);
    Ok(())
}

/// Design, basis and projection matrices of the orthogonalized model, plus
/// the fixed quantities the Gibbs sampler reuses every sweep.
#[derive(Debug, Clone)]
pub struct ModelMatrices {
    pub x: DMatrix<f64>,
    pub m: DMatrix<f64>,
    pub px: DMatrix<f64>,
    pub psi: DMatrix<f64>,
    pub ppsi: DMatrix<f64>,
    pub j: DMatrix<f64>,
    pub h: DMatrix<f64>,
    pub delta_ridge: f64,
    /// `XᵀX`.
    pub xtx: DMatrix<f64>,
    /// Orthonormal basis of the column space of `X`.
    pub x_orth: DMatrix<f64>,
    /// Eigenvectors `W` of `ΨᵀΨ = W diag(s) Wᵀ`.
    pub psi_gram_vectors: DMatrix<f64>,
    /// Eigenvalues `s` of `ΨᵀΨ`, clipped at zero.
    pub psi_gram_values: DVector<f64>,
    /// `HᵀH`.
    pub hth: DMatrix<f64>,
    /// `JᵀJ`.
    pub jtj: DMatrix<f64>,
}

impl ModelMatrices {
    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Builds the matrices with the default ridge `1e-8 · mean diag(ΨᵀΨ)`.
    pub fn new(x: DMatrix<f64>, kernel: &TpsKernel) -> Result<Self> {
        orthogonalize(x, kernel, None)
    }
}

/// Default ridge: `1e-8` times the mean diagonal of `ΨᵀΨ`.
pub fn default_ridge(psi_gram: &DMatrix<f64>) -> f64 {
    1e-8 * psi_gram.diagonal().mean()
}

/// Orthogonalizes the fixed, smooth and rough components. `delta_ridge`
/// defaults to [`default_ridge`].
pub fn orthogonalize(
    x: DMatrix<f64>,
    kernel: &TpsKernel,
    delta_ridge: Option<f64>,
) -> Result<ModelMatrices> {
    let n = x.nrows();
    if kernel.m.nrows() != n {
        return Err(Error::DimensionMismatch { expected: n, found: kernel.m.nrows() });
    }
    let rank = x.rank(1e-10 * x.abs().max().max(1.0));
    if rank < x.ncols() {
        return Err(Error::RankDeficientDesign { rank, cols: x.ncols() });
    }
    let px = projection(&x)?;
    let resid = DMatrix::identity(n, n) - &px;
    let m = kernel.m.clone();
    let psi = &resid * &m;
    let mut gram = psi.transpose() * &psi;
    gram = (&gram + gram.transpose()) * 0.5;
    let delta = match delta_ridge {
        Some(d) if d > 0.0 && d.is_finite() => d,
        Some(d) => return Err(Error::InvalidConfig(format!("ridge must be positive, got {d}"))),
        None => default_ridge(&gram),
    };

    let eig = SymmetricEigen::new(gram);
    let s = eig.eigenvalues.map(|v| v.max(0.0));
    let w = eig.eigenvectors;
    // (ΨᵀΨ + δI)⁻¹ = W diag(1/(s+δ)) Wᵀ
    let ginv = {
        let mut ws = w.clone();
        for (c, sc) in s.iter().enumerate() {
            ws.column_mut(c).scale_mut(1.0 / (sc + delta));
        }
        ws * w.transpose()
    };
    let j = &ginv * psi.transpose() * &resid;
    let ppsi = &psi * &ginv * psi.transpose();
    let h = (DMatrix::identity(n, n) - &ppsi) * &resid;
    let hth = h.transpose() * &h;
    let jtj = j.transpose() * &j;
    let xtx = x.transpose() * &x;
    let x_orth = x.clone().qr().q();
    Ok(ModelMatrices {
        x,
        m,
        px,
        psi,
        ppsi,
        j,
        h,
        delta_ridge: delta,
        xtx,
        x_orth,
        psi_gram_vectors: w,
        psi_gram_values: s,
        hth: (&hth + hth.transpose()) * 0.5,
        jtj: (&jtj + jtj.transpose()) * 0.5,
    })
}

/// Everything fixed about a fit: the grid, its differencing matrix, the
/// orthogonalized matrices and the anchor.
#[derive(Debug, Clone)]
pub struct HybridModel {
    pub grid: GridGraph,
    pub diff: DiffMatrix,
    pub mats: ModelMatrices,
    pub anchor: Anchor,
}

impl HybridModel {
    /// Linear design `[1, x, y]`, unit-variance thin-plate kernel, centered
    /// single anchor.
    pub fn new(grid: GridGraph, order: DiffOrder) -> Result<Self> {
        let kernel = build_tps_kernel(&grid, 1.0)?;
        let mats = ModelMatrices::new(linear_design(&grid), &kernel)?;
        let diff = build_diff_matrix(&grid, order)?;
        let anchor = Anchor::center(&grid);
        Ok(HybridModel { grid, diff, mats, anchor })
    }

    pub fn with_anchor(mut self, anchor: Anchor) -> Result<Self> {
        match anchor {
            Anchor::Single { index, weight } => {
                if index >= self.grid.n() {
                    return Err(Error::InvalidConfig(format!(
                        "anchor index {index} outside a grid of {} cells",
                        self.grid.n()
                    )));
                }
                if !(weight > 0.0) {
                    return Err(Error::InvalidConfig(format!("anchor weight must be positive, got {weight}")));
                }
            }
            Anchor::Ridge { delta } => {
                if !(delta > 0.0) {
                    return Err(Error::InvalidConfig(format!("ridge delta must be positive, got {delta}")));
                }
            }
        }
        self.anchor = anchor;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.grid.n()
    }

    /// Number of differences.
    pub fn m(&self) -> usize {
        self.diff.nrows()
    }
}
