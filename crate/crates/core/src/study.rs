//! The factorial simulation study: noise level × magnitude × method, with
//! replicate datasets shared by all methods of a (noise, magnitude) pair.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{kde_modes, mean, median, quantile_sorted, KdeModes};
use crate::error::{Error, Result};
use crate::grid::{build_grid, DiffOrder};
use crate::linalg::{build_tps_kernel, TpsKernel};
use crate::model::HybridModel;
use crate::priors::{PriorName, ScalingPrior};
use crate::sampler::{fmt, run_chain, FitMode, Observations, SamplerConfig, Samples};
use crate::synth::{make_synthetic, RoughTemplate, Synthetic, SYNTHETIC_SIGMA2};

/// A fitted model of the study: one of the five hybrid priors or the
/// thin-plate baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Hybrid(PriorName),
    Tps,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Hybrid(PriorName::Lasso),
        Method::Hybrid(PriorName::Horseshoe),
        Method::Hybrid(PriorName::Cauchy),
        Method::Hybrid(PriorName::Pareto),
        Method::Hybrid(PriorName::Nj),
        Method::Tps,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Hybrid(p) => p.as_str(),
            Method::Tps => "tps",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("tps") {
            Ok(Method::Tps)
        } else {
            s.parse().map(Method::Hybrid)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyDesign {
    /// Nugget levels `τ²`.
    pub noise_levels: Vec<f64>,
    pub magnitudes: Vec<f64>,
    pub methods: Vec<Method>,
    pub replicates: usize,
    pub base_seed: u64,
    pub nx: usize,
    pub ny: usize,
    pub n_iter: usize,
    pub burn_in: usize,
}

impl StudyDesign {
    /// 10 replicates on a 20×20 grid, 3,000 sweeps with 1,000 burn-in.
    pub fn desk_scale() -> Self {
        StudyDesign {
            noise_levels: vec![0.001, 0.01, 0.1],
            magnitudes: vec![0.5, 1.0, 2.0, 4.0],
            methods: Method::ALL.to_vec(),
            replicates: 10,
            base_seed: 20_240_501,
            nx: 20,
            ny: 20,
            n_iter: 3000,
            burn_in: 1000,
        }
    }

    /// As [`StudyDesign::desk_scale`] with 100 replicates.
    pub fn full_scale() -> Self {
        StudyDesign { replicates: 100, ..Self::desk_scale() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.noise_levels.is_empty() || self.magnitudes.is_empty() || self.methods.is_empty() {
            return bad("study design needs at least one level of every factor".into());
        }
        if self.replicates == 0 {
            return bad("study needs at least one replicate".into());
        }
        if self.noise_levels.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
            return bad("noise levels must be non-negative".into());
        }
        if self.magnitudes.iter().any(|m| !m.is_finite()) {
            return bad("magnitudes must be finite".into());
        }
        build_grid(self.nx, self.ny)?;
        SamplerConfig::new(self.n_iter, self.burn_in, 0).validate()
    }

    /// Every cell in noise-major, then magnitude, then method order.
    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for (ni, &noise) in self.noise_levels.iter().enumerate() {
            for (mi, &magnitude) in self.magnitudes.iter().enumerate() {
                for &method in &self.methods {
                    out.push(Cell { noise, magnitude, method, noise_index: ni, magnitude_index: mi });
                }
            }
        }
        out
    }

    /// Seed of the dataset shared by all methods of a (noise, magnitude,
    /// replicate) triple.
    pub fn data_seed(&self, cell: &Cell, replicate: usize) -> u64 {
        mix(mix(mix(self.base_seed, cell.noise_index as u64), cell.magnitude_index as u64), replicate as u64)
    }

    pub fn chain_seed(&self, cell: &Cell, replicate: usize) -> u64 {
        let tag = Method::ALL.iter().position(|m| *m == cell.method).unwrap_or(0) as u64;
        mix(self.data_seed(cell, replicate), 0x100 + tag)
    }
}

// SplitMix64 finalizer over a combined word.
fn mix(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(0x632B_E59B_D9B4_E019);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub noise: f64,
    pub magnitude: f64,
    pub method: Method,
    pub noise_index: usize,
    pub magnitude_index: usize,
}

impl Cell {
    pub fn key(&self) -> String {
        format!("tau2={}_mag={}_method={}", self.noise, self.magnitude, self.method)
    }
}

/// Outcome of one replicate of one cell. Failures are recorded in `error`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateResult {
    pub cell: Cell,
    pub replicate: usize,
    pub data_seed: u64,
    pub chain_seed: u64,
    /// Relative-L1 success of `E(γ | z)`; absent for the baseline.
    pub success: Option<f64>,
    pub tau2_covered: Option<bool>,
    pub sigma2_covered: Option<bool>,
    pub tau2_mean: Option<f64>,
    pub sigma2_mean: Option<f64>,
    pub error: Option<String>,
    /// Seconds; reported separately from the reproducible tables.
    pub wall_time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellAggregate {
    pub cell: Cell,
    pub replicates: usize,
    pub failures: usize,
    pub median_success: Option<f64>,
    pub mean_success: Option<f64>,
    pub tau2_coverage: usize,
    pub sigma2_coverage: usize,
}

#[derive(Debug, Clone)]
pub struct StudyResult {
    pub design: StudyDesign,
    /// Sorted by cell order, then replicate.
    pub replicates: Vec<ReplicateResult>,
}

/// `1 − ‖γ̂ − γ‖₁ / ‖γ‖₁`.
pub fn relative_l1_success(estimate: &[f64], truth: &[f64]) -> Result<f64> {
    if estimate.len() != truth.len() {
        return Err(Error::DimensionMismatch { expected: truth.len(), found: estimate.len() });
    }
    let norm: f64 = truth.iter().map(|v| v.abs()).sum();
    if norm == 0.0 {
        return Err(Error::UndefinedMetric);
    }
    let err: f64 = estimate.iter().zip(truth).map(|(a, b)| (a - b).abs()).sum();
    Ok(1.0 - err / norm)
}

/// Whether `truth` lies within the central `level` interval of the draws.
pub fn coverage_check(draws: &[f64], truth: f64, level: f64) -> Result<bool> {
    if draws.len() < 100 {
        return Err(Error::TooFewDraws { needed: 100, got: draws.len() });
    }
    let mut v = draws.to_vec();
    v.sort_by(f64::total_cmp);
    let tail = 0.5 * (1.0 - level);
    Ok(quantile_sorted(&v, tail) <= truth && truth <= quantile_sorted(&v, 1.0 - tail))
}

/// Shared, read-only pieces of a study on one grid.
pub struct StudyContext {
    pub model: HybridModel,
    pub kernel: TpsKernel,
    pub template: RoughTemplate,
}

impl StudyContext {
    pub fn new(nx: usize, ny: usize) -> Result<Self> {
        let grid = build_grid(nx, ny)?;
        let kernel = build_tps_kernel(&grid, 1.0)?;
        let model = HybridModel::new(grid, DiffOrder::First)?;
        let template = RoughTemplate::standard().resample(nx, ny);
        Ok(StudyContext { model, kernel, template })
    }

    pub fn dataset(&self, design: &StudyDesign, cell: &Cell, replicate: usize) -> Result<Synthetic> {
        let mut rng = ChaCha8Rng::seed_from_u64(design.data_seed(cell, replicate));
        make_synthetic(&self.kernel, &self.template, cell.magnitude, cell.noise, &mut rng)
    }

    /// Generates the replicate's data and fits the cell's method.
    pub fn fit(&self, design: &StudyDesign, cell: &Cell, replicate: usize) -> Result<(Synthetic, Samples)> {
        let data = self.dataset(design, cell, replicate)?;
        let obs = Observations::single(DVector::from_vec(data.z.clone()));
        let mut cfg = SamplerConfig::new(design.n_iter, design.burn_in, design.chain_seed(cell, replicate));
        let prior = match cell.method {
            Method::Hybrid(p) => ScalingPrior::initial(p, self.model.m()),
            Method::Tps => {
                cfg.mode = FitMode::SmoothOnly;
                ScalingPrior::initial(PriorName::Nj, self.model.m())
            }
        };
        let samples = run_chain(&obs, &self.model, prior, &cfg)?;
        Ok((data, samples))
    }

    fn replicate(&self, design: &StudyDesign, cell: &Cell, replicate: usize) -> ReplicateResult {
        let start = Instant::now();
        let mut out = ReplicateResult {
            cell: *cell,
            replicate,
            data_seed: design.data_seed(cell, replicate),
            chain_seed: design.chain_seed(cell, replicate),
            success: None,
            tau2_covered: None,
            sigma2_covered: None,
            tau2_mean: None,
            sigma2_mean: None,
            error: None,
            wall_time: 0.0,
        };
        let outcome = self.fit(design, cell, replicate).and_then(|(data, s)| {
            if cell.method != Method::Tps {
                out.success = match relative_l1_success(&s.mean_gamma(), &data.gamma) {
                    Ok(v) => Some(v),
                    Err(Error::UndefinedMetric) => None,
                    Err(e) => return Err(e),
                };
            }
            out.tau2_covered = Some(coverage_check(&s.tau2, cell.noise, 0.95)?);
            out.sigma2_covered = Some(coverage_check(&s.sigma2, SYNTHETIC_SIGMA2, 0.95)?);
            out.tau2_mean = Some(mean(&s.tau2));
            out.sigma2_mean = Some(mean(&s.sigma2));
            Ok(())
        });
        if let Err(e) = outcome {
            out.error = Some(e.to_string());
        }
        out.wall_time = start.elapsed().as_secs_f64();
        out
    }
}

/// Runs every cell × replicate on the rayon pool. With a cache directory,
/// finished replicates are stored as JSON and reused on the next call.
pub fn run_factorial(design: &StudyDesign, cache: Option<&Path>) -> Result<StudyResult> {
    design.validate()?;
    let ctx = StudyContext::new(design.nx, design.ny)?;
    if let Some(dir) = cache {
        fs::create_dir_all(dir)?;
    }
    let jobs: Vec<(Cell, usize)> =
        design.cells().into_iter().flat_map(|c| (0..design.replicates).map(move |r| (c, r))).collect();
    let replicates: Vec<ReplicateResult> = jobs
        .par_iter()
        .map(|(cell, r)| -> Result<ReplicateResult> {
            let path = cache.map(|d| cache_path(d, design, cell, *r));
            if let Some(p) = &path {
                if let Ok(text) = fs::read_to_string(p) {
                    if let Ok(hit) = serde_json::from_str::<ReplicateResult>(&text) {
                        if hit.cell == *cell && hit.replicate == *r && hit.chain_seed == design.chain_seed(cell, *r) {
                            return Ok(hit);
                        }
                    }
                }
            }
            let res = ctx.replicate(design, cell, *r);
            if let Some(p) = &path {
                let json = serde_json::to_string(&res).map_err(|e| Error::InvalidConfig(e.to_string()))?;
                fs::write(p, json)?;
            }
            Ok(res)
        })
        .collect::<Result<_>>()?;
    Ok(StudyResult { design: design.clone(), replicates })
}

fn cache_path(dir: &Path, design: &StudyDesign, cell: &Cell, replicate: usize) -> PathBuf {
    let tag = mix(
        mix(design.base_seed, design.n_iter as u64),
        mix(design.burn_in as u64, (design.nx * 100_000 + design.ny) as u64),
    );
    dir.join(format!("{}_rep{}_{:016x}.json", cell.key(), replicate, tag))
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt).unwrap_or_default()
}

fn opt_bool(v: Option<bool>) -> String {
    v.map(|b| b.to_string()).unwrap_or_default()
}

impl StudyResult {
    // CSV writer whose first line is a `#` comment with the design seed.
    fn writer_with_header(&self, path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
        let mut out = BufWriter::new(File::create(path)?);
        let d = &self.design;
        writeln!(
            out,
            "# base_seed={} replicates={} grid={}x{} iters={} burnin={}",
            d.base_seed, d.replicates, d.nx, d.ny, d.n_iter, d.burn_in
        )?;
        Ok(csv::Writer::from_writer(out))
    }

    pub fn for_cell(&self, cell: &Cell) -> Vec<&ReplicateResult> {
        self.replicates.iter().filter(|r| r.cell == *cell).collect()
    }

    /// Success values of a cell, failures and undefined values skipped.
    pub fn successes(&self, noise: f64, magnitude: f64, method: Method) -> Vec<f64> {
        self.replicates
            .iter()
            .filter(|r| r.cell.noise == noise && r.cell.magnitude == magnitude && r.cell.method == method)
            .filter_map(|r| r.success)
            .collect()
    }

    pub fn aggregates(&self) -> Vec<CellAggregate> {
        let mut by_key: BTreeMap<(usize, usize, Method), Vec<&ReplicateResult>> = BTreeMap::new();
        for r in &self.replicates {
            by_key.entry((r.cell.noise_index, r.cell.magnitude_index, r.cell.method)).or_default().push(r);
        }
        by_key
            .into_values()
            .map(|rs| {
                let mut succ: Vec<f64> = rs.iter().filter_map(|r| r.success).collect();
                succ.sort_by(f64::total_cmp);
                CellAggregate {
                    cell: rs[0].cell,
                    replicates: rs.len(),
                    failures: rs.iter().filter(|r| r.error.is_some()).count(),
                    median_success: (!succ.is_empty()).then(|| median(&succ)),
                    mean_success: (!succ.is_empty()).then(|| mean(&succ)),
                    tau2_coverage: rs.iter().filter(|r| r.tau2_covered == Some(true)).count(),
                    sigma2_coverage: rs.iter().filter(|r| r.sigma2_covered == Some(true)).count(),
                }
            })
            .collect()
    }

    /// One row per cell × replicate.
    pub fn write_tidy_csv(&self, path: &Path) -> Result<()> {
        let mut w = self.writer_with_header(path)?;
        w.write_record([
            "tau2",
            "magnitude",
            "method",
            "replicate",
            "data_seed",
            "chain_seed",
            "success",
            "tau2_covered",
            "sigma2_covered",
            "tau2_mean",
            "sigma2_mean",
            "error",
        ])?;
        for r in &self.replicates {
            w.write_record([
                fmt(r.cell.noise),
                fmt(r.cell.magnitude),
                r.cell.method.to_string(),
                r.replicate.to_string(),
                r.data_seed.to_string(),
                r.chain_seed.to_string(),
                opt(r.success),
                opt_bool(r.tau2_covered),
                opt_bool(r.sigma2_covered),
                opt(r.tau2_mean),
                opt(r.sigma2_mean),
                r.error.clone().unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_aggregate_csv(&self, path: &Path) -> Result<()> {
        let mut w = self.writer_with_header(path)?;
        w.write_record([
            "tau2",
            "magnitude",
            "method",
            "replicates",
            "failures",
            "median_success",
            "mean_success",
            "tau2_coverage",
            "sigma2_coverage",
        ])?;
        for a in self.aggregates() {
            w.write_record([
                fmt(a.cell.noise),
                fmt(a.cell.magnitude),
                a.cell.method.to_string(),
                a.replicates.to_string(),
                a.failures.to_string(),
                opt(a.median_success),
                opt(a.mean_success),
                a.tau2_coverage.to_string(),
                a.sigma2_coverage.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_timings_csv(&self, path: &Path) -> Result<()> {
        let mut w = self.writer_with_header(path)?;
        w.write_record(["tau2", "magnitude", "method", "replicate", "seconds"])?;
        for r in &self.replicates {
            w.write_record([
                fmt(r.cell.noise),
                fmt(r.cell.magnitude),
                r.cell.method.to_string(),
                r.replicate.to_string(),
                format!("{:.3}", r.wall_time),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Minimum spacing, in decades, between two reported modes of `−log10 λ²`.
pub const MODE_SEPARATION: f64 = 1.0;
/// Modes lower than this fraction of the tallest are ignored.
pub const MODE_MIN_HEIGHT: f64 = 0.02;

/// Pooled `−log10 λ²` draws with a histogram and a KDE mode count.
#[derive(Debug, Clone)]
pub struct LambdaHistogram {
    pub values: Vec<f64>,
    /// `(lower edge, upper edge, count)`.
    pub bins: Vec<(f64, f64, usize)>,
    pub modes: Option<KdeModes>,
}

impl LambdaHistogram {
    pub fn mode_count(&self) -> usize {
        self.modes.as_ref().map_or(0, |m| m.count())
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        // The same bins expressed on the 1/λ² scale are 10^edge.
        w.write_record(["neg_log10_lower", "neg_log10_upper", "inv_lambda2_lower", "inv_lambda2_upper", "count"])?;
        for (lo, hi, c) in &self.bins {
            w.write_record([fmt(*lo), fmt(*hi), fmt(10f64.powf(*lo)), fmt(10f64.powf(*hi)), c.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_modes_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["mode", "location", "relative_height", "bandwidth"])?;
        if let Some(m) = &self.modes {
            for (i, (loc, h)) in m.locations.iter().zip(&m.heights).enumerate() {
                w.write_record([i.to_string(), fmt(*loc), fmt(*h), fmt(m.bandwidth)])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Pools every stored `λ²` draw as `−log10 λ²` into 0.25-decade bins and
/// counts KDE modes at least a decade apart. A chain without scales gives
/// an empty table.
pub fn lambda_histogram_export(samples: &Samples) -> Result<LambdaHistogram> {
    let values: Vec<f64> = samples.lambda2.iter().flatten().map(|l| -l.log10()).collect();
    if values.is_empty() {
        return Ok(LambdaHistogram { values, bins: Vec::new(), modes: None });
    }
    let width = 0.25;
    let lo = (values.iter().copied().fold(f64::INFINITY, f64::min) / width).floor() * width;
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let nb = (((hi - lo) / width).floor() as usize + 1).max(1);
    let mut counts = vec![0usize; nb];
    for v in &values {
        counts[(((v - lo) / width) as usize).min(nb - 1)] += 1;
    }
    let bins = counts
        .into_iter()
        .enumerate()
        .map(|(i, c)| (lo + i as f64 * width, lo + (i + 1) as f64 * width, c))
        .collect();
    let modes = Some(kde_modes(&values, MODE_SEPARATION, MODE_MIN_HEIGHT)?);
    Ok(LambdaHistogram { values, bins, modes })
}
