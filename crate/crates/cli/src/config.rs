//! Command-line arguments, the TOML config file, and their merge into a
//! fully resolved run configuration.
//!
//! Every subcommand option may also be given in a `[fit]`, `[simulate]`,
//! `[study]` or `[threshold]` table of the config file, using the long flag
//! name with `-` replaced by `_`. Flags on the command line win. Relative
//! paths in the file are taken relative to the file's directory.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use hybridsurf::{FieldScheme, Method, PriorName, StudyDesign};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Parser)]
#[command(name = "hybridsurf", version, about = "Hybrid GP + rough-field smoothing of gridded data")]
pub struct Cli {
    /// TOML config file; command-line flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the hybrid model (or the thin-plate baseline) to a grid file.
    Fit(FitArgs),
    /// Simulate rough (NGP), smooth (GP) or synthetic study fields.
    Simulate(SimulateArgs),
    /// Run the factorial simulation study.
    Study(StudyArgs),
    /// Tabulate prior thresholding curves.
    Threshold(ThresholdArgs),
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitArgs {
    /// Grid CSV with header `row,col,value` or `row,col,member,value`.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Fit all members of an ensemble file jointly.
    #[arg(long)]
    pub ensemble: bool,
    /// lasso | horseshoe | cauchy | pareto | nj | tps
    #[arg(long)]
    pub prior: Option<String>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub burnin: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Expected grid size `WxH`; checked against the file.
    #[arg(long)]
    pub grid: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Redraw the fields every this many sweeps.
    #[arg(long)]
    pub period: Option<usize>,
    /// sequential | noncentered | interweaved
    #[arg(long)]
    pub scheme: Option<String>,
    /// Differencing order 1, 2 or 3.
    #[arg(long)]
    pub order: Option<usize>,
    #[arg(long)]
    pub thin: Option<usize>,
    /// Also write every stored draw to chain.csv.
    #[arg(long)]
    pub write_chain: bool,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateArgs {
    /// ngp | gp | synthetic
    #[arg(long)]
    pub kind: Option<String>,
    /// Scaling prior for ngp fields.
    #[arg(long)]
    pub prior: Option<String>,
    #[arg(long)]
    pub grid: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Rough-template magnitude (synthetic).
    #[arg(long)]
    pub magnitude: Option<f64>,
    /// Nugget variance (synthetic).
    #[arg(long)]
    pub tau2: Option<f64>,
    /// Number of realizations sharing the same fields (synthetic).
    #[arg(long)]
    pub members: Option<usize>,
    /// Smooth-field variance (gp).
    #[arg(long)]
    pub sigma2: Option<f64>,
    /// `b²` for lasso and cauchy ngp fields.
    #[arg(long)]
    pub b2: Option<f64>,
    /// Half-Cauchy scale for horseshoe ngp fields.
    #[arg(long)]
    pub hs_scale: Option<f64>,
    #[arg(long)]
    pub pareto_alpha: Option<f64>,
    #[arg(long)]
    pub pareto_min: Option<f64>,
    /// Lower bound of the normal-Jeffreys scale law for ngp fields.
    #[arg(long)]
    pub nj_lower: Option<f64>,
    #[arg(long)]
    pub nj_upper: Option<f64>,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyArgs {
    /// Desk-scale design: 10 replicates, 20x20 grid, 3000/1000 sweeps (the default).
    #[arg(long)]
    pub desk_scale: bool,
    /// Full-scale design: 100 replicates.
    #[arg(long, conflicts_with = "desk_scale")]
    pub full_scale: bool,
    #[arg(long)]
    pub replicates: Option<usize>,
    #[arg(long)]
    pub grid: Option<String>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub burnin: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated methods, e.g. `nj,lasso,tps`.
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    pub magnitudes: Option<Vec<f64>>,
    /// Comma-separated nugget levels τ².
    #[arg(long, value_delimiter = ',')]
    pub noise: Option<Vec<f64>>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Directory for per-replicate results, reused by later runs.
    #[arg(long)]
    pub cache: Option<PathBuf>,
    /// Also write wall-clock times to timings.csv (not reproducible).
    #[arg(long)]
    pub timings: bool,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThresholdArgs {
    /// A prior name or `all`.
    #[arg(long)]
    pub prior: Option<String>,
    #[arg(long)]
    pub theta_max: Option<f64>,
    /// Number of θ* values, symmetric about 0.
    #[arg(long)]
    pub points: Option<usize>,
    #[arg(long)]
    pub noise_scale: Option<f64>,
    #[arg(long)]
    pub laplace_b2: Option<f64>,
    #[arg(long)]
    pub cauchy_b2: Option<f64>,
    #[arg(long)]
    pub hs_scale: Option<f64>,
    #[arg(long)]
    pub pareto_alpha: Option<f64>,
    #[arg(long)]
    pub pareto_min: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// The config file.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub schema_version: Option<u32>,
    pub fit: FitArgs,
    pub simulate: SimulateArgs,
    pub study: StudyArgs,
    pub threshold: ThresholdArgs,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: FileConfig = toml::from_str(&text)?;
        if let Some(v) = cfg.schema_version {
            if v != SCHEMA_VERSION {
                return Err(CliError::Config(format!(
                    "unsupported schema_version {v}; this build reads version {SCHEMA_VERSION}"
                )));
            }
        }
        let base = path.parent().unwrap_or(Path::new("."));
        let rebase = |p: &mut Option<PathBuf>| {
            if let Some(x) = p {
                if x.is_relative() {
                    *x = base.join(&*x);
                }
            }
        };
        rebase(&mut cfg.fit.input);
        rebase(&mut cfg.fit.out);
        rebase(&mut cfg.simulate.out);
        rebase(&mut cfg.study.out);
        rebase(&mut cfg.study.cache);
        rebase(&mut cfg.threshold.out);
        Ok(cfg)
    }
}

/// `WxH` → (nx, ny).
pub fn parse_grid_dims(s: &str) -> Result<(usize, usize)> {
    let bad = || CliError::Config(format!("grid must look like 20x20, got `{s}`"));
    let (w, h) = s.to_ascii_lowercase().split_once('x').map(|(a, b)| (a.to_string(), b.to_string())).ok_or_else(bad)?;
    let nx = w.trim().parse().map_err(|_| bad())?;
    let ny = h.trim().parse().map_err(|_| bad())?;
    Ok((nx, ny))
}

fn parse_scheme(s: &str) -> Result<FieldScheme> {
    match s.to_ascii_lowercase().as_str() {
        "sequential" => Ok(FieldScheme::Sequential),
        "noncentered" | "non-centered" => Ok(FieldScheme::NonCentered),
        "interweaved" => Ok(FieldScheme::Interweaved),
        other => Err(CliError::Config(format!(
            "unknown scheme `{other}`; expected sequential, noncentered or interweaved"
        ))),
    }
}

fn scheme_name(s: FieldScheme) -> &'static str {
    match s {
        FieldScheme::Sequential => "sequential",
        FieldScheme::NonCentered => "noncentered",
        FieldScheme::Interweaved => "interweaved",
    }
}

pub fn parse_method(s: &str) -> Result<Method> {
    s.parse::<Method>().map_err(|_| {
        CliError::Config(format!("unknown prior `{s}`; expected lasso, horseshoe, cauchy, pareto, nj or tps"))
    })
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::Config(format!("{name} must be positive, got {v}")))
    }
}

const DEFAULT_OUT: &str = "hybridsurf-out";
const DEFAULT_SEED: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitConfig {
    pub schema_version: u32,
    pub command: String,
    pub input: PathBuf,
    pub ensemble: bool,
    pub prior: String,
    pub iters: usize,
    pub burnin: usize,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<String>,
    pub out: PathBuf,
    pub period: usize,
    pub scheme: String,
    pub order: usize,
    pub thin: usize,
    pub write_chain: bool,
}

impl FitConfig {
    pub fn resolve(cli: FitArgs, file: FitArgs) -> Result<Self> {
        let input = cli
            .input
            .or(file.input)
            .ok_or_else(|| CliError::Config("fit needs --input FILE".into()))?;
        if !input.exists() {
            return Err(CliError::Config(format!("input file {} does not exist", input.display())));
        }
        let prior = cli.prior.or(file.prior).unwrap_or_else(|| "nj".into()).to_ascii_lowercase();
        parse_method(&prior)?;
        let scheme = parse_scheme(&cli.scheme.or(file.scheme).unwrap_or_else(|| "interweaved".into()))?;
        let grid = cli.grid.or(file.grid);
        if let Some(g) = &grid {
            parse_grid_dims(g)?;
        }
        let cfg = FitConfig {
            schema_version: SCHEMA_VERSION,
            command: "fit".into(),
            input,
            ensemble: cli.ensemble || file.ensemble,
            prior,
            iters: cli.iters.or(file.iters).unwrap_or(3000),
            burnin: cli.burnin.or(file.burnin).unwrap_or(1000),
            seed: cli.seed.or(file.seed).unwrap_or(DEFAULT_SEED),
            grid,
            out: cli.out.or(file.out).unwrap_or_else(|| DEFAULT_OUT.into()),
            period: cli.period.or(file.period).unwrap_or(3),
            scheme: scheme_name(scheme).into(),
            order: cli.order.or(file.order).unwrap_or(1),
            thin: cli.thin.or(file.thin).unwrap_or(1),
            write_chain: cli.write_chain || file.write_chain,
        };
        Ok(cfg)
    }

    pub fn method(&self) -> Method {
        parse_method(&self.prior).expect("validated at resolution")
    }

    pub fn field_scheme(&self) -> FieldScheme {
        parse_scheme(&self.scheme).expect("validated at resolution")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SimKind {
    Ngp,
    Gp,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulateConfig {
    pub schema_version: u32,
    pub command: String,
    pub kind: SimKind,
    pub prior: String,
    pub grid: String,
    pub seed: u64,
    pub out: PathBuf,
    pub magnitude: f64,
    pub tau2: f64,
    pub members: usize,
    pub sigma2: f64,
    pub b2: f64,
    pub hs_scale: f64,
    pub pareto_alpha: f64,
    pub pareto_min: f64,
    pub nj_lower: f64,
    pub nj_upper: f64,
}

impl SimulateConfig {
    pub fn resolve(cli: SimulateArgs, file: SimulateArgs) -> Result<Self> {
        let kind = match cli.kind.or(file.kind).unwrap_or_else(|| "synthetic".into()).to_ascii_lowercase().as_str() {
            "ngp" => SimKind::Ngp,
            "gp" => SimKind::Gp,
            "synthetic" => SimKind::Synthetic,
            other => return Err(CliError::Config(format!("unknown kind `{other}`; expected ngp, gp or synthetic"))),
        };
        let prior = cli.prior.or(file.prior).unwrap_or_else(|| "nj".into()).to_ascii_lowercase();
        if kind == SimKind::Ngp {
            prior.parse::<PriorName>().map_err(|_| {
                CliError::Config(format!("ngp fields need one of the five scaling priors, got `{prior}`"))
            })?;
        }
        let grid = cli.grid.or(file.grid).unwrap_or_else(|| "20x20".into());
        parse_grid_dims(&grid)?;
        let tau2 = cli.tau2.or(file.tau2).unwrap_or(0.1);
        if !(tau2 >= 0.0 && tau2.is_finite()) {
            return Err(CliError::Config(format!("tau2 must be non-negative, got {tau2}")));
        }
        let members = cli.members.or(file.members).unwrap_or(1);
        if members == 0 {
            return Err(CliError::Config("members must be at least 1".into()));
        }
        Ok(SimulateConfig {
            schema_version: SCHEMA_VERSION,
            command: "simulate".into(),
            kind,
            prior,
            grid,
            seed: cli.seed.or(file.seed).unwrap_or(DEFAULT_SEED),
            out: cli.out.or(file.out).unwrap_or_else(|| DEFAULT_OUT.into()),
            magnitude: cli.magnitude.or(file.magnitude).unwrap_or(2.0),
            tau2,
            members,
            sigma2: positive("sigma2", cli.sigma2.or(file.sigma2).unwrap_or(0.5))?,
            b2: positive("b2", cli.b2.or(file.b2).unwrap_or(1.0))?,
            hs_scale: positive("hs_scale", cli.hs_scale.or(file.hs_scale).unwrap_or(1.0))?,
            pareto_alpha: positive("pareto_alpha", cli.pareto_alpha.or(file.pareto_alpha).unwrap_or(1.0))?,
            pareto_min: positive("pareto_min", cli.pareto_min.or(file.pareto_min).unwrap_or(1e-6))?,
            nj_lower: positive("nj_lower", cli.nj_lower.or(file.nj_lower).unwrap_or(1e-8))?,
            nj_upper: positive("nj_upper", cli.nj_upper.or(file.nj_upper).unwrap_or(1e8))?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyConfig {
    pub schema_version: u32,
    pub command: String,
    pub scale: String,
    pub replicates: usize,
    pub grid: String,
    pub iters: usize,
    pub burnin: usize,
    pub seed: u64,
    pub methods: Vec<String>,
    pub magnitudes: Vec<f64>,
    pub noise: Vec<f64>,
    pub out: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cache: Option<PathBuf>,
    pub timings: bool,
}

impl StudyConfig {
    pub fn resolve(cli: StudyArgs, file: StudyArgs) -> Result<Self> {
        let full = cli.full_scale || (file.full_scale && !cli.desk_scale);
        let base = if full { StudyDesign::full_scale() } else { StudyDesign::desk_scale() };
        let grid = cli.grid.or(file.grid).unwrap_or_else(|| format!("{}x{}", base.nx, base.ny));
        parse_grid_dims(&grid)?;
        let methods: Vec<String> = cli
            .methods
            .or(file.methods)
            .unwrap_or_else(|| base.methods.iter().map(|m| m.to_string()).collect())
            .into_iter()
            .map(|m| m.trim().to_ascii_lowercase())
            .collect();
        for m in &methods {
            parse_method(m)?;
        }
        let cfg = StudyConfig {
            schema_version: SCHEMA_VERSION,
            command: "study".into(),
            scale: if full { "full" } else { "desk" }.into(),
            replicates: cli.replicates.or(file.replicates).unwrap_or(base.replicates),
            grid,
            iters: cli.iters.or(file.iters).unwrap_or(base.n_iter),
            burnin: cli.burnin.or(file.burnin).unwrap_or(base.burn_in),
            seed: cli.seed.or(file.seed).unwrap_or(base.base_seed),
            methods,
            magnitudes: cli.magnitudes.or(file.magnitudes).unwrap_or(base.magnitudes),
            noise: cli.noise.or(file.noise).unwrap_or(base.noise_levels),
            out: cli.out.or(file.out).unwrap_or_else(|| DEFAULT_OUT.into()),
            cache: cli.cache.or(file.cache),
            timings: cli.timings || file.timings,
        };
        cfg.design()?.validate()?;
        Ok(cfg)
    }

    pub fn design(&self) -> Result<StudyDesign> {
        let (nx, ny) = parse_grid_dims(&self.grid)?;
        Ok(StudyDesign {
            noise_levels: self.noise.clone(),
            magnitudes: self.magnitudes.clone(),
            methods: self.methods.iter().map(|m| parse_method(m)).collect::<Result<_>>()?,
            replicates: self.replicates,
            base_seed: self.seed,
            nx,
            ny,
            n_iter: self.iters,
            burn_in: self.burnin,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdConfig {
    pub schema_version: u32,
    pub command: String,
    pub priors: Vec<String>,
    pub theta_max: f64,
    pub points: usize,
    pub noise_scale: f64,
    pub laplace_b2: f64,
    pub cauchy_b2: f64,
    pub hs_scale: f64,
    pub pareto_alpha: f64,
    pub pareto_min: f64,
    pub out: PathBuf,
}

impl ThresholdConfig {
    pub fn resolve(cli: ThresholdArgs, file: ThresholdArgs) -> Result<Self> {
        let p = cli.prior.or(file.prior).unwrap_or_else(|| "all".into()).to_ascii_lowercase();
        let priors: Vec<String> = if p == "all" {
            PriorName::ALL.iter().map(|p| p.to_string()).collect()
        } else {
            p.parse::<PriorName>()
                .map_err(|_| CliError::Config(format!("threshold needs a scaling prior or `all`, got `{p}`")))?;
            vec![p]
        };
        let points = cli.points.or(file.points).unwrap_or(201);
        if points < 2 {
            return Err(CliError::Config("points must be at least 2".into()));
        }
        Ok(ThresholdConfig {
            schema_version: SCHEMA_VERSION,
            command: "threshold".into(),
            priors,
            theta_max: positive("theta_max", cli.theta_max.or(file.theta_max).unwrap_or(10.0))?,
            points,
            noise_scale: positive("noise_scale", cli.noise_scale.or(file.noise_scale).unwrap_or(1.0))?,
            laplace_b2: positive("laplace_b2", cli.laplace_b2.or(file.laplace_b2).unwrap_or(1.0))?,
            // Cauchy scale 2
            cauchy_b2: positive("cauchy_b2", cli.cauchy_b2.or(file.cauchy_b2).unwrap_or(4.0))?,
            hs_scale: positive("hs_scale", cli.hs_scale.or(file.hs_scale).unwrap_or(1.0))?,
            pareto_alpha: positive("pareto_alpha", cli.pareto_alpha.or(file.pareto_alpha).unwrap_or(1.0))?,
            pareto_min: positive("pareto_min", cli.pareto_min.or(file.pareto_min).unwrap_or(0.01))?,
            out: cli.out.or(file.out).unwrap_or_else(|| DEFAULT_OUT.into()),
        })
    }
}
