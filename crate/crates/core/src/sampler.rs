//! Gibbs sampler for the orthogonalized hybrid model, for one realization
//! or an ensemble of `m` realizations sharing the same fields.
//!
//! One sweep draws `β*`, `y*`, `γ`, `τ²`, `σ²` and then the scales `λ²`.
//! With `k` members and `Σz = Σ_i z_i` the conditionals are
//!
//! * `β* ~ N(A⁻¹b, A⁻¹)`, `A = k XᵀX/τ²`, `b = Xᵀ(Σz − kΨy* − kHγ)/τ²`
//! * `y* ~ N(A⁻¹b, A⁻¹)`, `A = I/σ² + kΨᵀΨ/τ²`, `b = Ψᵀ(Σz − kXβ* − kHγ)/τ² + Jγ/σ²`
//! * `γ ~ N(A⁻¹b, A⁻¹)`, `A = kHᵀH/τ² + Q(λ²) + JᵀJ/σ²`,
//!   `b = Hᵀ(Σz − kXβ* − kΨy*)/τ² + Jᵀy*/σ²`
//! * `τ² ~ IG(kn/2 + α_τ², RSS/2 + β_τ²)`
//! * `σ² ~ IG(n/2 + α_σ², ‖y* − Jγ‖²/2 + β_σ²)`

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{effective_sample_size, mean, quantile_sorted, sd};
use crate::error::{Error, Result};
use crate::linalg::{sample_gaussian_precision, standard_normals, SpdFactor};
use crate::model::{add_q_to_dense, assemble_q_shifted, HybridModel};
use crate::priors::{inv_gamma, Mixing, PriorName, Scales, ScalingPrior};

/// Observed grid(s), flattened row-major.
#[derive(Debug, Clone)]
pub struct Observations {
    members: Vec<DVector<f64>>,
    mean: DVector<f64>,
    sum: DVector<f64>,
    within_ss: f64,
}

impl Observations {
    pub fn single(z: DVector<f64>) -> Self {
        Self::ensemble(vec![z]).expect("one member is always consistent")
    }

    pub fn ensemble(members: Vec<DVector<f64>>) -> Result<Self> {
        let Some(first) = members.first() else {
            return Err(Error::InvalidConfig("no observations".into()));
        };
        let n = first.len();
        for z in &members {
            if z.len() != n {
                return Err(Error::DimensionMismatch { expected: n, found: z.len() });
            }
        }
        let mut sum = DVector::zeros(n);
        for z in &members {
            sum += z;
        }
        let mean = &sum / members.len() as f64;
        let within_ss = members.iter().map(|z| (z - &mean).norm_squared()).sum();
        Ok(Observations { members, mean, sum, within_ss })
    }

    pub fn n(&self) -> usize {
        self.mean.len()
    }

    /// Number of realizations.
    pub fn members(&self) -> usize {
        self.members.len()
    }

    pub fn data(&self) -> &[DVector<f64>] {
        &self.members
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn sum(&self) -> &DVector<f64> {
        &self.sum
    }

    /// `Σ_i ‖z_i − μ‖²`.
    pub fn rss(&self, mu: &DVector<f64>) -> f64 {
        self.within_ss + self.members() as f64 * (&self.mean - mu).norm_squared()
    }
}

/// Inverse-gamma hyperparameters of the nugget and the smooth variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperpriors {
    pub alpha_tau2: f64,
    pub beta_tau2: f64,
    pub alpha_sigma2: f64,
    pub beta_sigma2: f64,
}

impl Default for Hyperpriors {
    fn default() -> Self {
        Hyperpriors { alpha_tau2: 0.001, beta_tau2: 0.001, alpha_sigma2: 0.001, beta_sigma2: 0.001 }
    }
}

/// Early-iteration lower bound on `λ²`: `floor_start · decay^t` while
/// `t < end_iteration`, nothing afterwards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveSchedule {
    pub floor_start: f64,
    pub decay: f64,
    pub end_iteration: usize,
}

impl AdaptiveSchedule {
    pub fn disabled() -> Self {
        AdaptiveSchedule { floor_start: 1.0, decay: 1.0, end_iteration: 0 }
    }

    /// Starts at 1 and decays geometrically to `delta_floor` at `burn_in / 2`.
    pub fn for_burn_in(burn_in: usize, delta_floor: f64) -> Self {
        let end = burn_in / 2;
        if end == 0 {
            return Self::disabled();
        }
        AdaptiveSchedule { floor_start: 1.0, decay: delta_floor.powf(1.0 / end as f64), end_iteration: end }
    }

    pub fn floor_at(&self, t: usize) -> Option<f64> {
        (t < self.end_iteration).then(|| self.floor_start * self.decay.powi(t as i32))
    }
}

/// Which components are fitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMode {
    /// Linear trend, smooth field and rough field.
    Hybrid,
    /// Thin-plate baseline: no rough field and no scale updates.
    SmoothOnly,
    /// Linear trend only.
    LinearOnly,
}

/// How the `(y*, γ)` pair is refreshed on a field-update sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldScheme {
    /// `y* | γ`, then `γ | y*`.
    Sequential,
    /// `y* | γ`, then `γ` given `ỹ = y* − Jγ`, then `y* = ỹ + Jγ`.
    NonCentered,
    /// Both `γ` draws in turn: `y* | γ`, `γ | y*`, `γ | ỹ`.
    Interweaved,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub n_iter: usize,
    pub burn_in: usize,
    pub partial_update_period: usize,
    pub adaptive: AdaptiveSchedule,
    pub hyper: Hyperpriors,
    /// Keep every `thin`-th post-burn-in draw.
    pub thin: usize,
    pub seed: u64,
    pub mode: FitMode,
    /// Hold `λ²` at its initial value.
    pub fixed_scales: bool,
    pub field_scheme: FieldScheme,
}

impl SamplerConfig {
    /// Defaults: partial updates every third sweep, the standard adaptive
    /// schedule, `0.001` hyperpriors, no thinning.
    pub fn new(n_iter: usize, burn_in: usize, seed: u64) -> Self {
        SamplerConfig {
            n_iter,
            burn_in,
            partial_update_period: 3,
            adaptive: AdaptiveSchedule::for_burn_in(burn_in, crate::priors::DEFAULT_DELTA_FLOOR),
            hyper: Hyperpriors::default(),
            thin: 1,
            seed,
            mode: FitMode::Hybrid,
            fixed_scales: false,
            field_scheme: FieldScheme::Interweaved,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.partial_update_period == 0 {
            return bad("partial_update_period must be at least 1".into());
        }
        if self.thin == 0 {
            return bad("thin must be at least 1".into());
        }
        if self.burn_in >= self.n_iter {
            return bad(format!("burn_in {} leaves no draws out of {}", self.burn_in, self.n_iter));
        }
        if self.adaptive.end_iteration > 0 {
            if self.adaptive.end_iteration >= self.burn_in {
                return bad(format!(
                    "adaptive end_iteration {} must precede burn_in {}",
                    self.adaptive.end_iteration, self.burn_in
                ));
            }
            if !(self.adaptive.floor_start > 0.0) || !(self.adaptive.decay > 0.0 && self.adaptive.decay <= 1.0) {
                return bad("adaptive schedule needs floor_start > 0 and decay in (0, 1]".into());
            }
        }
        let h = &self.hyper;
        if [h.alpha_tau2, h.beta_tau2, h.alpha_sigma2, h.beta_sigma2].iter().any(|v| !(*v >= 0.0)) {
            return bad("hyperpriors must be non-negative".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ChainState {
    pub beta: DVector<f64>,
    pub ystar: DVector<f64>,
    pub gamma: DVector<f64>,
    pub scales: Scales,
    pub tau2: f64,
    pub sigma2: f64,
    pub prior: ScalingPrior,
    pub iteration: usize,
}

impl ChainState {
    /// Least-squares trend, zero fields, unit smooth variance and unit
    /// scales; the nugget starts from [`initial_nugget`].
    pub fn initial(data: &Observations, model: &HybridModel, mut prior: ScalingPrior) -> Result<Self> {
        let n = model.n();
        if data.n() != n {
            return Err(Error::DimensionMismatch { expected: n, found: data.n() });
        }
        let m = model.m();
        if let Mixing::Horseshoe { v, .. } = &mut prior.mixing {
            if v.len() != m {
                *v = vec![1.0; m];
            }
        }
        prior.validate()?;
        let x = &model.mats.x;
        let beta = SpdFactor::from_dense(&model.mats.xtx)?.solve(x.tr_mul(data.mean()).as_slice())?;
        let beta = DVector::from_vec(beta);
        let resid = data.mean() - x * &beta;
        let tau2 = initial_nugget(data, model, &resid);
        Ok(ChainState {
            beta,
            ystar: DVector::zeros(n),
            gamma: DVector::zeros(n),
            scales: Scales::constant(m, 1.0 + prior.floor),
            tau2,
            sigma2: 1.0,
            prior,
            iteration: 0,
        })
    }

    /// `Xβ* + Ψy* + Hγ`.
    pub fn fitted_mean(&self, model: &HybridModel) -> DVector<f64> {
        let mats = &model.mats;
        &mats.x * &self.beta + &mats.psi * &self.ystar + &mats.h * &self.gamma
    }

    fn check_finite(&self, conditional: &'static str) -> Result<()> {
        let ok = self.beta.iter().all(|v| v.is_finite())
            && self.ystar.iter().all(|v| v.is_finite())
            && self.gamma.iter().all(|v| v.is_finite())
            && self.scales.lambda2.iter().all(|v| v.is_finite())
            && self.tau2.is_finite()
            && self.tau2 > 0.0
            && self.sigma2.is_finite()
            && self.sigma2 > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::NonFinite { iteration: self.iteration, conditional })
        }
    }
}

/// Starting nugget. Several members give the pooled within-member variance;
/// a single grid gives the robust estimate `(1.4826 · MAD)² / 2` over
/// neighbour differences of the detrended data, which ignores the few
/// large differences at steps.
pub fn initial_nugget(data: &Observations, model: &HybridModel, resid: &DVector<f64>) -> f64 {
    let n = data.n() as f64;
    let total = resid.norm_squared() / n;
    let est = if data.members() > 1 {
        data.within_ss / ((data.members() - 1) as f64 * n)
    } else {
        let diffs: Vec<f64> = model.grid.edges().iter().map(|&(a, b)| (resid[a] - resid[b]).abs()).collect();
        let mad = 1.4826 * crate::diagnostics::median(&diffs);
        0.5 * mad * mad
    };
    let floor = 1e-6 * total.max(f64::MIN_POSITIVE);
    if est.is_finite() && est > floor {
        est
    } else {
        total.max(1e-6)
    }
}

fn chain_err(iteration: usize, conditional: &'static str) -> impl FnOnce(Error) -> Error {
    move |e| Error::Chain { iteration, conditional, source: Box::new(e) }
}

/// Draws `β*` from its full conditional.
pub fn draw_beta<R: Rng + ?Sized>(
    state: &ChainState,
    data: &Observations,
    model: &HybridModel,
    rng: &mut R,
) -> Result<DVector<f64>> {
    let mats = &model.mats;
    let k = data.members() as f64;
    let a = &mats.xtx * (k / state.tau2);
    let r = data.sum() - (&mats.psi * &state.ystar + &mats.h * &state.gamma) * k;
    let b = mats.x.tr_mul(&r) / state.tau2;
    let f = SpdFactor::from_dense(&a)?;
    Ok(DVector::from_vec(sample_gaussian_precision(&f, b.as_slice(), rng)?))
}

/// Draws `y*` in the eigenbasis of `ΨᵀΨ`, where its precision is diagonal.
pub fn draw_ystar<R: Rng + ?Sized>(
    state: &ChainState,
    data: &Observations,
    model: &HybridModel,
    rng: &mut R,
) -> Result<DVector<f64>> {
    let mats = &model.mats;
    let k = data.members() as f64;
    let r = data.sum() - (&mats.x * &state.beta + &mats.h * &state.gamma) * k;
    let b = mats.psi.tr_mul(&r) / state.tau2 + &mats.j * &state.gamma / state.sigma2;
    let w = &mats.psi_gram_vectors;
    let c = w.tr_mul(&b);
    let coef = DVector::from_iterator(
        c.len(),
        c.iter().zip(mats.psi_gram_values.iter()).map(|(ci, s)| {
            let d = 1.0 / state.sigma2 + k * s / state.tau2;
            let z: f64 = rng.sample(StandardNormal);
            ci / d + z / d.sqrt()
        }),
    );
    Ok(w * coef)
}

/// Precision `A` and shift `b` of the `γ` conditional.
pub fn gamma_conditional(
    state: &ChainState,
    data: &Observations,
    model: &HybridModel,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let mats = &model.mats;
    let k = data.members() as f64;
    let mut a = &mats.hth * (k / state.tau2) + &mats.jtj * (1.0 / state.sigma2);
    add_q_to_dense(&model.diff, &state.scales.lambda2, &model.anchor, &mut a)?;
    let r = data.sum() - (&mats.x * &state.beta + &mats.psi * &state.ystar) * k;
    let b = mats.h.tr_mul(&r) / state.tau2 + mats.j.tr_mul(&state.ystar) / state.sigma2;
    Ok((a, b))
}

pub fn draw_gamma<R: Rng + ?Sized>(
    state: &ChainState,
    data: &Observations,
    model: &HybridModel,
    rng: &mut R,
) -> Result<DVector<f64>> {
    let (a, b) = gamma_conditional(state, data, model)?;
    let f = SpdFactor::from_dense(&a)?;
    Ok(DVector::from_vec(sample_gaussian_precision(&f, b.as_slice(), rng)?))
}

/// Draws `γ` given `ỹ = y* − Jγ` instead of `y*`.
///
/// With `ỹ` held fixed the rough field enters the mean as
/// `ΨJγ + Hγ = (I − P_X)γ`, so the conditional precision is
/// `A = Q + k(I − P_X)/τ² = S − VVᵀ` with sparse `S = Q + (k/τ²) I` and
/// `V = √(k/τ²) X̃`, `X̃` an orthonormal basis of `col(X)`. The draw uses
/// the sparse factor of `S` and the Woodbury identity for the rank-`p`
/// correction.
pub fn draw_gamma_noncentered<R: Rng + ?Sized>(
    state: &ChainState,
    ytilde: &DVector<f64>,
    data: &Observations,
    model: &HybridModel,
    rng: &mut R,
) -> Result<DVector<f64>> {
    let mats = &model.mats;
    let n = model.n();
    let k = data.members() as f64;
    let c = k / state.tau2;
    let s = assemble_q_shifted(&model.diff, &state.scales.lambda2, &model.anchor, c)?;
    let f = SpdFactor::from_csr(&s)?;
    let r = data.sum() - (&mats.x * &state.beta + &mats.psi * ytilde) * k;
    let r = &r - &mats.px * &r;
    let b = r / state.tau2;

    let p = mats.x_orth.ncols();
    let v = &mats.x_orth * c.sqrt();
    let mut siv = v.clone();
    for mut col in siv.column_iter_mut() {
        let sol = f.solve(col.as_slice())?;
        col.copy_from_slice(&sol);
    }
    let g = v.tr_mul(&siv);
    let kinv = DMatrix::identity(p, p) - g;
    let kf = SpdFactor::from_dense(&kinv)?;

    let mean0 = DVector::from_vec(f.solve(b.as_slice())?);
    let proj = DVector::from_vec(kf.solve(v.tr_mul(&mean0).as_slice())?);
    let mut z = standard_normals(n, rng);
    f.solve_upper_in_place(&mut z);
    // w ~ N(0, K) with K = (I − VᵀS⁻¹V)⁻¹
    let w = DVector::from_vec(sample_gaussian_precision(&kf, &vec![0.0; p], rng)?);
    Ok(mean0 + &siv * (proj + w) + DVector::from_vec(z))
}

/// Shape and rate of the inverse-gamma `τ²` conditional.
pub fn tau2_conditional(
    state: &ChainState,
    data: &Observations,
    model: &HybridModel,
    hyper: &Hyperpriors,
) -> (f64, f64) {
    let (extra_shape, extra_rate) = state.prior.tau2_augmentation();
    let mu = state.fitted_mean(model);
    let shape = 0.5 * (data.members() * data.n()) as f64 + hyper.alpha_tau2 + extra_shape;
    let rate = 0.5 * data.rss(&mu) + hyper.beta_tau2 + extra_rate;
    (shape, rate)
}

/// Shape and rate of the inverse-gamma `σ²` conditional.
pub fn sigma2_conditional(state: &ChainState, model: &HybridModel, hyper: &Hyperpriors) -> (f64, f64) {
    let dev = &state.ystar - &model.mats.j * &state.gamma;
    (0.5 * model.n() as f64 + hyper.alpha_sigma2, 0.5 * dev.norm_squared() + hyper.beta_sigma2)
}

/// What one sweep did.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepInfo {
    pub field_update: bool,
}

/// One full sweep. `y*` and `γ` are only redrawn when the iteration counter
/// is a multiple of `partial_update_period`.
pub fn gibbs_step<R: Rng + ?Sized>(
    state: &mut ChainState,
    data: &Observations,
    model: &HybridModel,
    cfg: &SamplerConfig,
    rng: &mut R,
) -> Result<StepInfo> {
    let t = state.iteration;
    state.beta = draw_beta(state, data, model, rng).map_err(chain_err(t, "beta"))?;
    state.check_finite("beta")?;

    let field_update = t % cfg.partial_update_period == 0;
    if field_update && cfg.mode != FitMode::LinearOnly {
        state.ystar = draw_ystar(state, data, model, rng).map_err(chain_err(t, "y*"))?;
        state.check_finite("y*")?;
    }
    if field_update && cfg.mode == FitMode::Hybrid {
        if cfg.field_scheme != FieldScheme::NonCentered {
            state.gamma = draw_gamma(state, data, model, rng).map_err(chain_err(t, "gamma"))?;
            state.check_finite("gamma")?;
        }
        if cfg.field_scheme != FieldScheme::Sequential {
            let ytilde = &state.ystar - &model.mats.j * &state.gamma;
            state.gamma =
                draw_gamma_noncentered(state, &ytilde, data, model, rng).map_err(chain_err(t, "gamma"))?;
            state.ystar = ytilde + &model.mats.j * &state.gamma;
            state.check_finite("gamma")?;
        }
    }

    let (shape, rate) = tau2_conditional(state, data, model, &cfg.hyper);
    state.tau2 = inv_gamma(shape, rate, rng);
    state.check_finite("tau2")?;

    if cfg.mode != FitMode::LinearOnly {
        let (shape, rate) = sigma2_conditional(state, model, &cfg.hyper);
        state.sigma2 = inv_gamma(shape, rate, rng);
        state.check_finite("sigma2")?;
    }

    if cfg.mode == FitMode::Hybrid && !cfg.fixed_scales {
        let diffs = model.diff.apply(state.gamma.as_slice());
        let floor = cfg.adaptive.floor_at(t);
        state
            .prior
            .update_lambda_posterior(&diffs, &mut state.scales, state.tau2, rng, floor)
            .map_err(chain_err(t, "lambda2"))?;
        state.check_finite("lambda2")?;
    }
    state.iteration += 1;
    Ok(StepInfo { field_update })
}

/// Stored post-burn-in draws.
#[derive(Debug, Clone)]
pub struct Samples {
    pub seed: u64,
    pub prior: Option<PriorName>,
    pub mode: FitMode,
    pub members: usize,
    pub iterations: Vec<usize>,
    pub beta: Vec<Vec<f64>>,
    pub tau2: Vec<f64>,
    pub sigma2: Vec<f64>,
    pub ystar: Vec<Vec<f64>>,
    pub gamma: Vec<Vec<f64>>,
    /// Fitted mean `Xβ* + Ψy* + Hγ`.
    pub mu: Vec<Vec<f64>>,
    /// Empty unless the rough field is fitted.
    pub lambda2: Vec<Vec<f64>>,
    /// Number of sweeps, burn-in included, that redrew `γ`.
    pub gamma_draws: usize,
}

/// Posterior summary of one scalar.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub q025: f64,
    pub q975: f64,
    pub ess: f64,
}

impl ParamSummary {
    pub fn from_draws(name: impl Into<String>, draws: &[f64]) -> Self {
        let mut sorted = draws.to_vec();
        sorted.sort_by(f64::total_cmp);
        ParamSummary {
            name: name.into(),
            mean: mean(draws),
            sd: sd(draws),
            q025: quantile_sorted(&sorted, 0.025),
            q975: quantile_sorted(&sorted, 0.975),
            ess: effective_sample_size(draws),
        }
    }
}

fn column(draws: &[Vec<f64>], i: usize) -> Vec<f64> {
    draws.iter().map(|d| d[i]).collect()
}

fn pointwise<F: Fn(&[f64]) -> f64>(draws: &[Vec<f64>], f: F) -> Vec<f64> {
    let n = draws.first().map_or(0, |d| d.len());
    (0..n).map(|i| f(&column(draws, i))).collect()
}

impl Samples {
    pub fn len(&self) -> usize {
        self.tau2.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tau2.is_empty()
    }

    pub fn mean_mu(&self) -> Vec<f64> {
        pointwise(&self.mu, mean)
    }

    pub fn sd_mu(&self) -> Vec<f64> {
        pointwise(&self.mu, sd)
    }

    pub fn mean_gamma(&self) -> Vec<f64> {
        pointwise(&self.gamma, mean)
    }

    pub fn sd_gamma(&self) -> Vec<f64> {
        pointwise(&self.gamma, sd)
    }

    pub fn mean_tau2(&self) -> f64 {
        mean(&self.tau2)
    }

    /// Summaries for every stored scalar, in chain-CSV column order.
    pub fn summaries(&self) -> Vec<ParamSummary> {
        let mut out = vec![
            ParamSummary::from_draws("tau2", &self.tau2),
            ParamSummary::from_draws("sigma2", &self.sigma2),
        ];
        let groups: [(&str, &Vec<Vec<f64>>); 5] = [
            ("beta", &self.beta),
            ("ystar", &self.ystar),
            ("gamma", &self.gamma),
            ("mu", &self.mu),
            ("lambda2", &self.lambda2),
        ];
        for (name, draws) in groups {
            let width = draws.first().map_or(0, |d| d.len());
            for i in 0..width {
                out.push(ParamSummary::from_draws(format!("{name}_{i}"), &column(draws, i)));
            }
        }
        out
    }

    fn header_line(&self) -> String {
        format!(
            "# seed={} prior={} mode={:?} members={} draws={}",
            self.seed,
            self.prior.map_or("none".to_string(), |p| p.to_string()),
            self.mode,
            self.members,
            self.len()
        )
    }

    /// One row per stored iteration: `iteration, tau2, sigma2, beta_*,
    /// ystar_*, gamma_*, mu_*, lambda2_*`. The first line is a `#` comment
    /// carrying the seed.
    pub fn write_chain_csv(&self, path: &Path) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "{}", self.header_line())?;
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["iteration".to_string(), "tau2".into(), "sigma2".into()];
        let groups: [(&str, &Vec<Vec<f64>>); 5] = [
            ("beta", &self.beta),
            ("ystar", &self.ystar),
            ("gamma", &self.gamma),
            ("mu", &self.mu),
            ("lambda2", &self.lambda2),
        ];
        for (name, draws) in &groups {
            let width = draws.first().map_or(0, |d| d.len());
            header.extend((0..width).map(|i| format!("{name}_{i}")));
        }
        w.write_record(&header)?;
        for s in 0..self.len() {
            let mut row = vec![self.iterations[s].to_string(), fmt(self.tau2[s]), fmt(self.sigma2[s])];
            for (_, draws) in &groups {
                if let Some(d) = draws.get(s) {
                    row.extend(d.iter().map(|v| fmt(*v)));
                }
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_summary_csv(&self, path: &Path) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "{}", self.header_line())?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["parameter", "mean", "sd", "q025", "q975", "ess"])?;
        for s in self.summaries() {
            w.write_record([s.name, fmt(s.mean), fmt(s.sd), fmt(s.q025), fmt(s.q975), fmt(s.ess)])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Shortest representation that parses back to the same `f64`.
pub fn fmt(v: f64) -> String {
    format!("{v:?}")
}

/// Runs a chain from [`ChainState::initial`].
pub fn run_chain(
    data: &Observations,
    model: &HybridModel,
    prior: ScalingPrior,
    cfg: &SamplerConfig,
) -> Result<Samples> {
    let state = ChainState::initial(data, model, prior)?;
    run_chain_from(state, data, model, cfg)
}

/// Runs a chain from a given state; the generator is seeded from `cfg.seed`.
pub fn run_chain_from(
    mut state: ChainState,
    data: &Observations,
    model: &HybridModel,
    cfg: &SamplerConfig,
) -> Result<Samples> {
    cfg.validate()?;
    if data.n() != model.n() {
        return Err(Error::DimensionMismatch { expected: model.n(), found: data.n() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let keep = (cfg.n_iter - cfg.burn_in).div_ceil(cfg.thin);
    let mut s = Samples {
        seed: cfg.seed,
        prior: (cfg.mode == FitMode::Hybrid).then(|| state.prior.name()),
        mode: cfg.mode,
        members: data.members(),
        iterations: Vec::with_capacity(keep),
        beta: Vec::with_capacity(keep),
        tau2: Vec::with_capacity(keep),
        sigma2: Vec::with_capacity(keep),
        ystar: Vec::with_capacity(keep),
        gamma: Vec::with_capacity(keep),
        mu: Vec::with_capacity(keep),
        lambda2: Vec::new(),
        gamma_draws: 0,
    };
    for t in 0..cfg.n_iter {
        let info = gibbs_step(&mut state, data, model, cfg, &mut rng)?;
        if info.field_update && cfg.mode == FitMode::Hybrid {
            s.gamma_draws += 1;
        }
        if t >= cfg.burn_in && (t - cfg.burn_in) % cfg.thin == 0 {
            s.iterations.push(t);
            s.beta.push(state.beta.as_slice().to_vec());
            s.tau2.push(state.tau2);
            s.sigma2.push(state.sigma2);
            s.ystar.push(state.ystar.as_slice().to_vec());
            s.gamma.push(state.gamma.as_slice().to_vec());
            s.mu.push(state.fitted_mean(model).as_slice().to_vec());
            if cfg.mode == FitMode::Hybrid {
                s.lambda2.push(state.scales.lambda2.clone());
            }
        }
    }
    Ok(s)
}

/// Covariance-based effective degrees of freedom.
///
/// A replicate `z_rep = μ + ε` drawn alongside each stored `μ` has
/// `Cov(μ_i, z_rep,i) = Var(μ_i | z)`, so the estimate is
/// `k Σ_i Var(μ_i | z) / E(τ² | z)` with `k` the number of realizations.
/// For a linear smoother with known nugget this is the trace of the hat
/// matrix.
pub fn estimate_edf(samples: &Samples) -> Result<f64> {
    if samples.len() < 100 {
        return Err(Error::TooFewDraws { needed: 100, got: samples.len() });
    }
    let var_sum: f64 = pointwise(&samples.mu, crate::diagnostics::variance).iter().sum();
    Ok(samples.members as f64 * var_sum / samples.mean_tau2())
}
