//! Regular two-dimensional grids, their nearest-neighbour pair structure and
//! discrete differencing matrices of order 1 to 3.
//!
//! Flattening is row-major: the cell at `(row, col)` has flat index
//! `row * nx + col`, with `row < ny` and `col < nx`. Order-1 pairs are listed
//! horizontal first (row-major scan), then vertical.
//!
//! Orders 2 and 3 are built axis-separably: the 1-D stencils `(1, -2, 1)` and
//! `(1, -3, 3, -1)` are applied along every row and then along every column,
//! and the two blocks are stacked. Mixed-direction (cross) differences are not
//! generated.

use nalgebra::DVector;
use nalgebra_sparse::{CooMatrix, CsrMatrix};

use crate::error::{Error, Result};

/// Grid geometry plus the indexed nearest-neighbour pairs `ν ↦ (i(ν), j(ν))`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridGraph {
    nx: usize,
    ny: usize,
    edges: Vec<(usize, usize)>,
}

impl GridGraph {
    pub fn new(nx: usize, ny: usize) -> Result<Self> {
        build_grid(nx, ny)
    }

    /// Number of columns.
    pub fn nx(&self) -> usize {
        self.nx
    }

    /// Number of rows.
    pub fn ny(&self) -> usize {
        self.ny
    }

    /// Number of field locations.
    pub fn n(&self) -> usize {
        self.nx * self.ny
    }

    /// Number of unique adjacent pairs.
    pub fn m(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn index(&self, row: usize, col: usize) -> usize {
        debug_assert!(row < self.ny && col < self.nx);
        row * self.nx + col
    }

    pub fn row_col(&self, index: usize) -> (usize, usize) {
        debug_assert!(index < self.n());
        (index / self.nx, index % self.nx)
    }

    /// The cell used as the default anchor location.
    pub fn center(&self) -> usize {
        self.index(self.ny / 2, self.nx / 2)
    }

    /// Cell coordinates rescaled to the unit square, `(x, y) = (col, row) / (dim - 1)`.
    pub fn unit_coords(&self) -> Vec<(f64, f64)> {
        let sx = (self.nx - 1) as f64;
        let sy = (self.ny - 1) as f64;
        (0..self.n())
            .map(|k| {
                let (r, c) = self.row_col(k);
                (c as f64 / sx, r as f64 / sy)
            })
            .collect()
    }

    /// Dense degree-minus-adjacency matrix of the order-1 graph.
    pub fn laplacian(&self) -> nalgebra::DMatrix<f64> {
        let n = self.n();
        let mut l = nalgebra::DMatrix::zeros(n, n);
        for &(i, j) in &self.edges {
            l[(i, i)] += 1.0;
            l[(j, j)] += 1.0;
            l[(i, j)] -= 1.0;
            l[(j, i)] -= 1.0;
        }
        l
    }
}

/// Builds the `nx × ny` grid graph. Both dimensions must be at least 2.
pub fn build_grid(nx: usize, ny: usize) -> Result<GridGraph> {
    if nx < 2 || ny < 2 {
        return Err(Error::InvalidGrid { nx, ny });
    }
    let mut edges = Vec::with_capacity(nx * (ny - 1) + ny * (nx - 1));
    for r in 0..ny {
        for c in 0..nx - 1 {
            let k = r * nx + c;
            edges.push((k, k + 1));
        }
    }
    for r in 0..ny - 1 {
        for c in 0..nx {
            let k = r * nx + c;
            edges.push((k, k + nx));
        }
    }
    Ok(GridGraph { nx, ny, edges })
}

/// Differencing order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum DiffOrder {
    First,
    Second,
    Third,
}

impl DiffOrder {
    pub fn from_int(k: usize) -> Result<Self> {
        match k {
            1 => Ok(DiffOrder::First),
            2 => Ok(DiffOrder::Second),
            3 => Ok(DiffOrder::Third),
            _ => Err(Error::InvalidOrder { order: k, axis_len: 0 }),
        }
    }

    pub fn as_int(self) -> usize {
        match self {
            DiffOrder::First => 1,
            DiffOrder::Second => 2,
            DiffOrder::Third => 3,
        }
    }

    /// 1-D stencil, leading coefficient `+1`.
    pub fn stencil(self) -> &'static [f64] {
        match self {
            DiffOrder::First => &[1.0, -1.0],
            DiffOrder::Second => &[1.0, -2.0, 1.0],
            DiffOrder::Third => &[1.0, -3.0, 3.0, -1.0],
        }
    }
}

/// One row of a differencing matrix: the touched cells `i(ν), j(ν), k(ν), l(ν)`
/// in stencil order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiffRow {
    pub cells: Vec<usize>,
}

/// Sparse differencing matrix `D` together with its row stencils.
#[derive(Debug, Clone)]
pub struct DiffMatrix {
    order: DiffOrder,
    n: usize,
    rows: Vec<DiffRow>,
}

impl DiffMatrix {
    pub fn order(&self) -> DiffOrder {
        self.order
    }

    /// Number of rows (the `m` of the scale vector).
    pub fn nrows(&self) -> usize {
        self.rows.len()
    }

    /// Number of columns (field locations).
    pub fn ncols(&self) -> usize {
        self.n
    }

    pub fn rows(&self) -> &[DiffRow] {
        &self.rows
    }

    /// Triplets `(row, col, value)` in row order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let st = self.order.stencil();
        self.rows.iter().enumerate().flat_map(move |(nu, row)| {
            row.cells.iter().zip(st).map(move |(&c, &w)| (nu, c, w))
        })
    }

    pub fn to_csr(&self) -> CsrMatrix<f64> {
        let mut coo = CooMatrix::new(self.nrows(), self.n);
        for (r, c, v) in self.triplets() {
            coo.push(r, c, v);
        }
        CsrMatrix::from(&coo)
    }

    /// `D γ`.
    pub fn apply(&self, field: &[f64]) -> Vec<f64> {
        assert_eq!(field.len(), self.n, "field length does not match grid");
        let st = self.order.stencil();
        self.rows
            .iter()
            .map(|row| row.cells.iter().zip(st).map(|(&c, &w)| w * field[c]).sum())
            .collect()
    }

    pub fn apply_vec(&self, field: &DVector<f64>) -> Vec<f64> {
        self.apply(field.as_slice())
    }

    /// Visits every structural entry of `D^T W D` for row weights `w`, calling
    /// `f(a, b, value)` once per (row, pair of stencil cells).
    pub fn for_each_gram_entry<F: FnMut(usize, usize, f64)>(&self, weights: &[f64], mut f: F) {
        assert_eq!(weights.len(), self.nrows());
        let st = self.order.stencil();
        for (row, &w) in self.rows.iter().zip(weights) {
            for (a, &ca) in row.cells.iter().enumerate() {
                for (b, &cb) in row.cells.iter().enumerate() {
                    f(ca, cb, w * st[a] * st[b]);
                }
            }
        }
    }
}

/// Builds the order-`k` differencing matrix over `grid`. Each axis needs at
/// least `k + 1` points.
pub fn build_diff_matrix(grid: &GridGraph, order: DiffOrder) -> Result<DiffMatrix> {
    let k = order.as_int();
    let short = grid.nx.min(grid.ny);
    if short < k + 1 {
        return Err(Error::InvalidOrder { order: k, axis_len: short });
    }
    let rows = match order {
        DiffOrder::First => grid
            .edges
            .iter()
            .map(|&(i, j)| DiffRow { cells: vec![i, j] })
            .collect(),
        _ => {
            let (nx, ny) = (grid.nx, grid.ny);
            let mut rows = Vec::with_capacity(ny * (nx - k) + nx * (ny - k));
            for r in 0..ny {
                for c in 0..nx - k {
                    rows.push(DiffRow { cells: (0..=k).map(|s| r * nx + c + s).collect() });
                }
            }
            for r in 0..ny - k {
                for c in 0..nx {
                    rows.push(DiffRow { cells: (0..=k).map(|s| (r + s) * nx + c).collect() });
                }
            }
            rows
        }
    };
    Ok(DiffMatrix { order, n: grid.n(), rows })
}
