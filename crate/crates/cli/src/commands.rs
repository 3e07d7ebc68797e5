//! The four subcommands. Each writes its resolved configuration to
//! `config.toml` in the output directory next to its results.

use std::fs;
use std::path::Path;

use hybridsurf::grid::{build_grid, DiffOrder};
use hybridsurf::linalg::build_tps_kernel;
use hybridsurf::model::Anchor;
use hybridsurf::priors::thresholding_curve;
use hybridsurf::sampler::fmt;
use hybridsurf::study::{lambda_histogram_export, run_factorial};
use hybridsurf::synth::{
    make_synthetic_ensemble, simulate_gp_field, simulate_ngp_field, step_structure_ratio, write_field_csv,
};
use hybridsurf::{
    estimate_edf, run_chain, Error, FitMode, HybridModel, Method, Observations, PriorName, RoughTemplate,
    SamplerConfig, ScalingPrior,
};
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{
    parse_grid_dims, FitConfig, SimKind, SimulateConfig, StudyConfig, ThresholdConfig,
};
use crate::error::{CliError, Result};
use crate::ingest::ingest_grid;

fn prepare_out(dir: &Path, config: &impl Serialize) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("config.toml"), toml::to_string(config)?)?;
    Ok(())
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

#[derive(Serialize)]
struct FitReport {
    seed: u64,
    method: String,
    nx: usize,
    ny: usize,
    members: usize,
    draws: usize,
    gamma_draws: usize,
    /// `null` when the chain kept too few draws.
    edf: Option<f64>,
    tau2_mean: f64,
    sigma2_mean: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    lambda_modes: Option<usize>,
}

pub fn fit(cfg: &FitConfig) -> Result<()> {
    let data = ingest_grid(&cfg.input)?;
    if let Some(g) = &cfg.grid {
        let (nx, ny) = parse_grid_dims(g)?;
        if (nx, ny) != (data.nx, data.ny) {
            return Err(Error::DimensionMismatch { expected: nx * ny, found: data.n() }.into());
        }
    }
    if data.is_ensemble() && !cfg.ensemble {
        return Err(CliError::Config(format!(
            "{} has {} members; pass --ensemble to fit them jointly",
            cfg.input.display(),
            data.members.len()
        )));
    }
    let grid = data.grid()?;
    let order = DiffOrder::from_int(cfg.order)?;
    let model = HybridModel::new(grid.clone(), order)?;
    let obs = if data.is_ensemble() {
        Observations::ensemble(data.members.iter().map(|m| DVector::from_column_slice(m)).collect())?
    } else {
        Observations::single(DVector::from_column_slice(&data.members[0]))
    };

    let mut sc = SamplerConfig::new(cfg.iters, cfg.burnin, cfg.seed);
    sc.partial_update_period = cfg.period;
    sc.thin = cfg.thin;
    sc.field_scheme = cfg.field_scheme();
    let method = cfg.method();
    let prior = match method {
        Method::Hybrid(p) => ScalingPrior::initial(p, model.m()),
        Method::Tps => {
            sc.mode = FitMode::SmoothOnly;
            ScalingPrior::initial(PriorName::Nj, model.m())
        }
    };
    sc.validate()?;
    prepare_out(&cfg.out, cfg)?;

    let s = run_chain(&obs, &model, prior, &sc)?;
    let edf = match estimate_edf(&s) {
        Ok(v) => Some(v),
        Err(Error::TooFewDraws { .. }) => None,
        Err(e) => return Err(e.into()),
    };
    let meta = format!("seed={} method={} members={}", cfg.seed, method, obs.members());
    let out = &cfg.out;
    write_field_csv(&out.join("mu_mean.csv"), &grid, &[&s.mean_mu()], &meta)?;
    write_field_csv(&out.join("mu_sd.csv"), &grid, &[&s.sd_mu()], &meta)?;
    write_field_csv(&out.join("gamma_mean.csv"), &grid, &[&s.mean_gamma()], &meta)?;
    write_field_csv(&out.join("gamma_sd.csv"), &grid, &[&s.sd_gamma()], &meta)?;
    s.write_summary_csv(&out.join("summary.csv"))?;
    if cfg.write_chain {
        s.write_chain_csv(&out.join("chain.csv"))?;
    }
    let mut lambda_modes = None;
    if sc.mode == FitMode::Hybrid {
        let h = lambda_histogram_export(&s)?;
        h.write_csv(&out.join("lambda_hist.csv"))?;
        h.write_modes_csv(&out.join("lambda_modes.csv"))?;
        lambda_modes = Some(h.mode_count());
    }
    let report = FitReport {
        seed: cfg.seed,
        method: method.to_string(),
        nx: data.nx,
        ny: data.ny,
        members: obs.members(),
        draws: s.len(),
        gamma_draws: s.gamma_draws,
        edf,
        tau2_mean: s.mean_tau2(),
        sigma2_mean: hybridsurf::diagnostics::mean(&s.sigma2),
        lambda_modes,
    };
    write_json(&out.join("fit.json"), &report)
}

#[derive(Serialize)]
struct SimulateReport {
    seed: u64,
    kind: SimKind,
    nx: usize,
    ny: usize,
    /// `median |Δ| / q95 |Δ|` of the rough field; near 0 for plateaus.
    step_ratio: f64,
    files: Vec<String>,
}

fn ngp_prior(cfg: &SimulateConfig, m: usize) -> Result<ScalingPrior> {
    let name: PriorName = cfg.prior.parse()?;
    let prior = match name {
        PriorName::Lasso => ScalingPrior::laplace(cfg.b2)?,
        PriorName::Cauchy => ScalingPrior::cauchy(cfg.b2)?,
        PriorName::Horseshoe => ScalingPrior::horseshoe(m, cfg.hs_scale)?,
        PriorName::Pareto => ScalingPrior::pareto(cfg.pareto_alpha, cfg.pareto_min)?,
        PriorName::Nj => ScalingPrior::normal_jeffreys_bounds(cfg.nj_lower, cfg.nj_upper)?,
    };
    Ok(prior)
}

pub fn simulate(cfg: &SimulateConfig) -> Result<()> {
    let (nx, ny) = parse_grid_dims(&cfg.grid)?;
    let grid = build_grid(nx, ny)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    prepare_out(&cfg.out, cfg)?;
    let meta = format!("seed={} kind={}", cfg.seed, serde_json::to_value(cfg.kind)?.as_str().unwrap_or(""));
    let out = &cfg.out;
    let (files, step_ratio) = match cfg.kind {
        SimKind::Ngp => {
            let diff = hybridsurf::build_diff_matrix(&grid, DiffOrder::First)?;
            let prior = ngp_prior(cfg, diff.nrows())?;
            let field = simulate_ngp_field(&diff, &Anchor::center(&grid), &prior, &mut rng, None)?;
            write_field_csv(&out.join("field.csv"), &grid, &[&field], &format!("{meta} prior={}", cfg.prior))?;
            (vec!["field.csv".to_string()], step_structure_ratio(&grid, &field))
        }
        SimKind::Gp => {
            let kernel = build_tps_kernel(&grid, 1.0)?;
            let field = simulate_gp_field(&kernel, cfg.sigma2, &mut rng);
            write_field_csv(&out.join("field.csv"), &grid, &[&field], &meta)?;
            (vec!["field.csv".to_string()], step_structure_ratio(&grid, &field))
        }
        SimKind::Synthetic => {
            let kernel = build_tps_kernel(&grid, 1.0)?;
            let template = RoughTemplate::standard().resample(nx, ny);
            let syn = make_synthetic_ensemble(&kernel, &template, cfg.magnitude, cfg.tau2, cfg.members, &mut rng)?;
            let members: Vec<&[f64]> = syn.members.iter().map(|m| m.as_slice()).collect();
            let meta = format!("{meta} magnitude={} tau2={}", fmt(cfg.magnitude), fmt(cfg.tau2));
            write_field_csv(&out.join("data.csv"), &grid, &members, &meta)?;
            write_field_csv(&out.join("gamma.csv"), &grid, &[&syn.gamma], &meta)?;
            write_field_csv(&out.join("smooth.csv"), &grid, &[&syn.y], &meta)?;
            let files = ["data.csv", "gamma.csv", "smooth.csv"].map(String::from).to_vec();
            (files, step_structure_ratio(&grid, &syn.gamma))
        }
    };
    let report = SimulateReport { seed: cfg.seed, kind: cfg.kind, nx, ny, step_ratio, files };
    write_json(&out.join("meta.json"), &report)
}

pub fn study(cfg: &StudyConfig) -> Result<()> {
    let design = cfg.design()?;
    prepare_out(&cfg.out, cfg)?;
    if let Some(c) = &cfg.cache {
        fs::create_dir_all(c)?;
    }
    let result = run_factorial(&design, cfg.cache.as_deref())?;
    result.write_tidy_csv(&cfg.out.join("tidy.csv"))?;
    result.write_aggregate_csv(&cfg.out.join("aggregate.csv"))?;
    if cfg.timings {
        result.write_timings_csv(&cfg.out.join("timings.csv"))?;
    }
    Ok(())
}

/// The prior used for a thresholding curve, with the configured scales.
pub fn threshold_prior(cfg: &ThresholdConfig, name: PriorName) -> Result<ScalingPrior> {
    let prior = match name {
        PriorName::Lasso => ScalingPrior::laplace(cfg.laplace_b2)?,
        PriorName::Cauchy => ScalingPrior::cauchy(cfg.cauchy_b2)?,
        // Marginal at the fixed global scale t² = scale².
        PriorName::Horseshoe => ScalingPrior::horseshoe(1, cfg.hs_scale)?,
        PriorName::Pareto => ScalingPrior::pareto(cfg.pareto_alpha, cfg.pareto_min)?,
        PriorName::Nj => ScalingPrior::normal_jeffreys(),
    };
    Ok(prior)
}

pub fn threshold(cfg: &ThresholdConfig) -> Result<()> {
    prepare_out(&cfg.out, cfg)?;
    let k = cfg.points - 1;
    let thetas: Vec<f64> = (0..cfg.points).map(|i| -cfg.theta_max + 2.0 * cfg.theta_max * i as f64 / k as f64).collect();
    let mut w = csv::Writer::from_path(cfg.out.join("thresholding.csv"))?;
    w.write_record(["prior", "theta_star", "posterior_mean", "shift"])?;
    for p in &cfg.priors {
        let name: PriorName = p.parse()?;
        let prior = threshold_prior(cfg, name)?;
        let curve = thresholding_curve(&prior, &thetas, cfg.noise_scale)?;
        for (t, m) in thetas.iter().zip(&curve) {
            w.write_record([p.clone(), fmt(*t), fmt(*m), fmt(m - t)])?;
        }
    }
    w.flush()?;
    Ok(())
}
