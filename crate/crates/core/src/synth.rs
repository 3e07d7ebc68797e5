//! Simulated rough (NGP) and smooth (GP) fields and the synthetic datasets
//! of the simulation study.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::diagnostics::{median, quantile};
use crate::error::{Error, Result};
use crate::grid::{DiffMatrix, GridGraph};
use crate::linalg::{standard_normals, TpsKernel};
use crate::model::{build_q_factored, Anchor};
use crate::priors::ScalingPrior;
use crate::sampler::fmt;

const TEMPLATE_CSV: &str = include_str!("../assets/rough_template.csv");

/// Plateau map of the rough truth: each cell carries a label `0..=3` whose
/// plateau value is the label itself, scaled by the magnitude.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RoughTemplate {
    nx: usize,
    ny: usize,
    labels: Vec<u8>,
}

impl RoughTemplate {
    /// The shipped 20×20 template: four irregular regions with plateaus
    /// 0, 1, 2 and 3, the center cell lying in plateau 0.
    pub fn standard() -> Self {
        Self::parse(TEMPLATE_CSV).expect("bundled template is well formed")
    }

    /// Parses a headerless CSV grid of labels, first line the top row.
    pub fn parse(text: &str) -> Result<Self> {
        let mut labels = Vec::new();
        let mut nx = 0;
        let mut ny = 0;
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let row: Vec<u8> = line
                .split(',')
                .map(|t| t.trim().parse::<u8>().map_err(|e| Error::Ingest(format!("template label '{t}': {e}"))))
                .collect::<Result<_>>()?;
            if ny == 0 {
                nx = row.len();
            } else if row.len() != nx {
                return Err(Error::Ingest(format!("template row {ny} has {} cells, expected {nx}", row.len())));
            }
            if let Some(bad) = row.iter().find(|l| **l > 3) {
                return Err(Error::Ingest(format!("template label {bad} outside 0..=3")));
            }
            labels.extend(row);
            ny += 1;
        }
        if nx < 2 || ny < 2 {
            return Err(Error::InvalidGrid { nx, ny });
        }
        Ok(RoughTemplate { nx, ny, labels })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn label(&self, row: usize, col: usize) -> u8 {
        self.labels[row * self.nx + col]
    }

    /// Nearest-neighbour resampling onto another grid size.
    pub fn resample(&self, nx: usize, ny: usize) -> Self {
        let pick = |i: usize, out: usize, src: usize| ((i as f64 + 0.5) * src as f64 / out as f64) as usize;
        let labels = (0..ny)
            .flat_map(|r| (0..nx).map(move |c| (r, c)))
            .map(|(r, c)| self.label(pick(r, ny, self.ny).min(self.ny - 1), pick(c, nx, self.nx).min(self.nx - 1)))
            .collect();
        RoughTemplate { nx, ny, labels }
    }

    /// Row-major plateau field scaled by `magnitude`.
    pub fn field(&self, magnitude: f64) -> Vec<f64> {
        self.labels.iter().map(|l| magnitude * *l as f64).collect()
    }
}

/// Draws `λ²` from the prior and returns a field `x` with covariance
/// `Q(λ²)⁻¹`, solving `Lᵀ x = noise` with the Cholesky factor of `Q`.
/// `shared_noise` replaces the fresh standard normals, so two priors can
/// be compared on the same white noise.
pub fn simulate_ngp_field<R: Rng + ?Sized>(
    diff: &DiffMatrix,
    anchor: &Anchor,
    prior: &ScalingPrior,
    rng: &mut R,
    shared_noise: Option<&[f64]>,
) -> Result<Vec<f64>> {
    let lambda2 = prior.simulate_lambda(diff.nrows(), rng)?;
    ngp_field_from_scales(diff, anchor, &lambda2, rng, shared_noise)
}

/// As [`simulate_ngp_field`] with given scales.
pub fn ngp_field_from_scales<R: Rng + ?Sized>(
    diff: &DiffMatrix,
    anchor: &Anchor,
    lambda2: &[f64],
    rng: &mut R,
    shared_noise: Option<&[f64]>,
) -> Result<Vec<f64>> {
    let n = diff.ncols();
    let (_, factor) = build_q_factored(diff, lambda2, anchor)?;
    let mut x = match shared_noise {
        Some(z) if z.len() != n => return Err(Error::DimensionMismatch { expected: n, found: z.len() }),
        Some(z) => z.to_vec(),
        None => standard_normals(n, rng),
    };
    factor.solve_upper_in_place(&mut x);
    Ok(x)
}

/// `√σ² · M z` for a unit-variance kernel factor `M`.
pub fn simulate_gp_field<R: Rng + ?Sized>(kernel: &TpsKernel, sigma2: f64, rng: &mut R) -> Vec<f64> {
    let n = kernel.m.ncols();
    let z = DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
    let y = &kernel.m * z * sigma2.sqrt();
    y.as_slice().to_vec()
}

/// Smooth-field variance of the synthetic study.
pub const SYNTHETIC_SIGMA2: f64 = 0.5;

pub const CANONICAL_MAGNITUDES: [f64; 4] = [0.5, 1.0, 2.0, 4.0];
pub const CANONICAL_NOISE: [f64; 3] = [0.001, 0.01, 0.1];

/// One synthetic dataset with its stored components: `z = y + γ + ε`.
#[derive(Debug, Clone)]
pub struct Synthetic {
    pub z: Vec<f64>,
    pub gamma: Vec<f64>,
    pub y: Vec<f64>,
    pub eps: Vec<f64>,
    /// True when the magnitude or nugget lies outside the study levels.
    pub non_canonical: bool,
}

/// Generates `z = y + magnitude · template + ε` with `y` a thin-plate GP
/// draw at `σ² = 0.5` and `ε ~ N(0, τ² I)`. `kernel` must have unit
/// variance and match the template's grid.
pub fn make_synthetic<R: Rng + ?Sized>(
    kernel: &TpsKernel,
    template: &RoughTemplate,
    magnitude: f64,
    tau2: f64,
    rng: &mut R,
) -> Result<Synthetic> {
    let n = kernel.m.nrows();
    if template.nx * template.ny != n {
        return Err(Error::DimensionMismatch { expected: n, found: template.nx * template.ny });
    }
    if !(tau2 >= 0.0) || !magnitude.is_finite() {
        return Err(Error::InvalidConfig(format!("bad synthetic levels: magnitude {magnitude}, tau2 {tau2}")));
    }
    let y = simulate_gp_field(kernel, SYNTHETIC_SIGMA2, rng);
    let gamma = template.field(magnitude);
    let sd = tau2.sqrt();
    let eps: Vec<f64> = (0..n).map(|_| sd * rng.sample::<f64, _>(StandardNormal)).collect();
    let z = (0..n).map(|i| y[i] + gamma[i] + eps[i]).collect();
    let non_canonical = !CANONICAL_MAGNITUDES.contains(&magnitude) || !CANONICAL_NOISE.contains(&tau2);
    Ok(Synthetic { z, gamma, y, eps, non_canonical })
}

/// Several realizations sharing one smooth field and one rough field:
/// `z_k = y + magnitude · template + ε_k`.
#[derive(Debug, Clone)]
pub struct SyntheticEnsemble {
    pub members: Vec<Vec<f64>>,
    pub gamma: Vec<f64>,
    pub y: Vec<f64>,
}

pub fn make_synthetic_ensemble<R: Rng + ?Sized>(
    kernel: &TpsKernel,
    template: &RoughTemplate,
    magnitude: f64,
    tau2: f64,
    members: usize,
    rng: &mut R,
) -> Result<SyntheticEnsemble> {
    if members == 0 {
        return Err(Error::InvalidConfig("an ensemble needs at least one member".into()));
    }
    let first = make_synthetic(kernel, template, magnitude, tau2, rng)?;
    let sd = tau2.sqrt();
    let mut out = vec![first.z];
    for _ in 1..members {
        let z = (0..first.y.len())
            .map(|i| first.y[i] + first.gamma[i] + sd * rng.sample::<f64, _>(StandardNormal))
            .collect();
        out.push(z);
    }
    Ok(SyntheticEnsemble { members: out, gamma: first.gamma, y: first.y })
}

/// `median |Δ| / q95 |Δ|` over first-order neighbour differences; a field
/// made of flat plateaus has a ratio near zero.
pub fn step_structure_ratio(grid: &GridGraph, field: &[f64]) -> f64 {
    let diffs: Vec<f64> = grid.edges().iter().map(|&(a, b)| (field[a] - field[b]).abs()).collect();
    let q95 = quantile(&diffs, 0.95);
    if q95 == 0.0 {
        return 0.0;
    }
    median(&diffs) / q95
}

/// Threshold of the step-structure test.
pub const STEP_RATIO_THRESHOLD: f64 = 0.01;

pub fn has_step_structure(grid: &GridGraph, field: &[f64]) -> bool {
    step_structure_ratio(grid, field) < STEP_RATIO_THRESHOLD
}

/// Writes `row,col,value` (or `row,col,member,value` for several members)
/// after a `#` comment line holding `meta`.
pub fn write_field_csv(path: &Path, grid: &GridGraph, members: &[&[f64]], meta: &str) -> Result<()> {
    let n = grid.n();
    for m in members {
        if m.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: m.len() });
        }
    }
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "# {meta}")?;
    let mut w = csv::Writer::from_writer(out);
    if members.len() == 1 {
        w.write_record(["row", "col", "value"])?;
        for (i, v) in members[0].iter().enumerate() {
            let (r, c) = grid.row_col(i);
            w.write_record([r.to_string(), c.to_string(), fmt(*v)])?;
        }
    } else {
        w.write_record(["row", "col", "member", "value"])?;
        for (k, field) in members.iter().enumerate() {
            for (i, v) in field.iter().enumerate() {
                let (r, c) = grid.row_col(i);
                w.write_record([r.to_string(), c.to_string(), (k + 1).to_string(), fmt(*v)])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}
