//! Oracle machinery shared by the conditional-distribution tests and the
//! acceptance suite. Everything here is derived from the joint density of
//! the model written out directly, not from the sampler code.

#![allow(dead_code)]

pub mod conjugacy;
pub mod metropolis;

use hybridsurf::diagnostics::{ks_one_sample, mean, variance};
use hybridsurf::grid::{build_grid, DiffOrder};
use hybridsurf::linalg::build_tps_kernel;
use hybridsurf::model::{Anchor, HybridModel, ModelMatrices};
use hybridsurf::priors::{Mixing, ScalingPrior, Scales};
use hybridsurf::quadrature::integrate;
use hybridsurf::sampler::{ChainState, Hyperpriors, Observations};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ContinuousCDF, Normal};

pub const DRAWS: usize = 50_000;
pub const ALPHA: f64 = 0.01;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Outcome of one statistical comparison.
#[derive(Debug, Clone)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Check { name: name.into(), passed, detail: detail.into() }
    }
}

/// Two-sided normal quantile for a Bonferroni-corrected family of `tests`.
pub fn z_crit(tests: usize) -> f64 {
    let n = Normal::new(0.0, 1.0).unwrap();
    n.inverse_cdf(1.0 - ALPHA / (2.0 * tests as f64))
}

/// Toy problem on a small grid with a fixed, non-trivial chain state.
pub struct Toy {
    pub model: HybridModel,
    pub data: Observations,
    pub state: ChainState,
    pub hyper: Hyperpriors,
}

impl Toy {
    pub fn new(nx: usize, ny: usize, members: usize, prior: ScalingPrior, seed: u64) -> Toy {
        Toy::build(nx, ny, members, prior, seed, false)
    }

    /// As [`Toy::new`]; `intercept_only` replaces `[1, x, y]` by a single
    /// column of ones.
    pub fn build(nx: usize, ny: usize, members: usize, prior: ScalingPrior, seed: u64, intercept_only: bool) -> Toy {
        let grid = build_grid(nx, ny).unwrap();
        let center = grid.center();
        let mut model = HybridModel::new(grid, DiffOrder::First)
            .unwrap()
            .with_anchor(Anchor::Single { index: center, weight: 10.0 })
            .unwrap();
        if intercept_only {
            let kernel = build_tps_kernel(&model.grid, 1.0).unwrap();
            let ones = DMatrix::from_element(model.n(), 1, 1.0);
            model.mats = ModelMatrices::new(ones, &kernel).unwrap();
        }
        let p = model.mats.p();
        let n = model.n();
        let m = model.m();
        let mut r = rng(seed);
        let mut normal = |s: f64| -> f64 { s * r.sample::<f64, _>(StandardNormal) };
        let truth: Vec<f64> = (0..n).map(|i| (i % 3) as f64 + normal(0.5)).collect();
        let zs: Vec<DVector<f64>> = (0..members)
            .map(|_| DVector::from_iterator(n, truth.iter().map(|t| t + normal(0.4))))
            .collect();
        let data = if members == 1 {
            Observations::single(zs[0].clone())
        } else {
            Observations::ensemble(zs).unwrap()
        };
        let mut state = ChainState::initial(&data, &model, prior).unwrap();
        state.beta = DVector::from_iterator(p, (0..p).map(|_| normal(1.0)));
        state.ystar = DVector::from_iterator(state.ystar.len(), (0..state.ystar.len()).map(|_| normal(0.7)));
        state.gamma = DVector::from_iterator(n, (0..n).map(|_| normal(0.6)));
        let mut lambda2 = Vec::with_capacity(m);
        for _ in 0..m {
            let u: f64 = r.random();
            lambda2.push(0.05 + 2.0 * u);
        }
        state.scales = Scales { star: lambda2.clone(), lambda2 };
        state.tau2 = 0.3;
        state.sigma2 = 0.8;
        Toy { model, data, state, hyper: Hyperpriors::default() }
    }

    /// Log of the joint density in the orthogonalized parameterization,
    /// up to terms not involving `β*`, `y*`, `γ`, `τ²`, `σ²`.
    pub fn log_joint(
        &self,
        beta: &DVector<f64>,
        ystar: &DVector<f64>,
        gamma: &DVector<f64>,
        tau2: f64,
        sigma2: f64,
    ) -> f64 {
        let mats = &self.model.mats;
        let mu = &mats.x * beta + &mats.psi * ystar + &mats.h * gamma;
        let k = self.data.members() as f64;
        let n = self.model.n() as f64;
        let rss: f64 = self.data.data().iter().map(|z| (z - &mu).norm_squared()).sum();
        let mut lp = -0.5 * rss / tau2 - 0.5 * k * n * tau2.ln();

        let dev = ystar - &mats.j * gamma;
        let q = ystar.len() as f64;
        lp += -0.5 * dev.norm_squared() / sigma2 - 0.5 * q * sigma2.ln();

        let diffs = self.model.diff.apply(gamma.as_slice());
        let lam = &self.state.scales.lambda2;
        lp -= 0.5 * diffs.iter().zip(lam).map(|(d, l)| d * d / l).sum::<f64>();
        match self.model.anchor {
            Anchor::Single { index, weight } => lp -= 0.5 * weight * gamma[index] * gamma[index],
            Anchor::Ridge { delta } => lp -= 0.5 * delta * gamma.norm_squared(),
        }

        let h = &self.hyper;
        lp += -(h.alpha_tau2 + 1.0) * tau2.ln() - h.beta_tau2 / tau2;
        lp += -(h.alpha_sigma2 + 1.0) * sigma2.ln() - h.beta_sigma2 / sigma2;
        if let Mixing::Horseshoe { a, .. } = self.state.prior.mixing {
            // a | τ² ~ IG(1/2, 1/τ²)
            lp += -0.5 * tau2.ln() - 1.0 / (a * tau2);
        }
        lp
    }
}

/// Precision and mean of a Gaussian whose log density is the quadratic `f`,
/// recovered from exact second differences around the origin.
pub fn gaussian_from_quadratic<F: Fn(&DVector<f64>) -> f64>(dim: usize, f: F) -> (DMatrix<f64>, DVector<f64>) {
    let zero = DVector::zeros(dim);
    let f0 = f(&zero);
    let e = |i: usize, s: f64| {
        let mut v = DVector::zeros(dim);
        v[i] = s;
        v
    };
    let fp: Vec<f64> = (0..dim).map(|i| f(&e(i, 1.0))).collect();
    let fm: Vec<f64> = (0..dim).map(|i| f(&e(i, -1.0))).collect();
    let mut a = DMatrix::zeros(dim, dim);
    for i in 0..dim {
        a[(i, i)] = -(fp[i] + fm[i] - 2.0 * f0);
        for j in 0..i {
            let mut v = e(i, 1.0);
            v[j] = 1.0;
            let hij = f(&v) - fp[i] - fp[j] + f0;
            a[(i, j)] = -hij;
            a[(j, i)] = -hij;
        }
    }
    let g = DVector::from_iterator(dim, (0..dim).map(|i| 0.5 * (fp[i] - fm[i])));
    let mean = a.clone().cholesky().expect("oracle precision not SPD").solve(&g);
    (a, mean)
}

/// Whitens draws of `N(mean, A⁻¹)` with the Cholesky factor of `A` and checks
/// that the result is i.i.d. standard normal: per-coordinate mean and
/// variance z-tests, a pooled KS test, and pairwise correlations, all
/// Bonferroni corrected to the 1% level.
pub fn check_gaussian(name: &str, draws: &[DVector<f64>], centre: &DVector<f64>, precision: &DMatrix<f64>) -> Check {
    let dim = centre.len();
    let l = precision.clone().cholesky().expect("oracle precision not SPD").l();
    let w: Vec<DVector<f64>> = draws.iter().map(|x| l.tr_mul(&(x - centre))).collect();
    let n = w.len() as f64;
    let tests = 2 * dim + dim * (dim - 1) / 2 + 1;
    let zc = z_crit(tests);
    let mut worst: f64 = 0.0;
    let mut what = String::new();
    let mut note = |z: f64, label: String| {
        if z.abs() > worst {
            worst = z.abs();
            what = label;
        }
    };
    for i in 0..dim {
        let c: Vec<f64> = w.iter().map(|v| v[i]).collect();
        note(mean(&c) * n.sqrt(), format!("mean[{i}]"));
        // Var of a sample variance of N(0,1) data is 2/(n−1).
        note((variance(&c) - 1.0) / (2.0 / (n - 1.0)).sqrt(), format!("var[{i}]"));
        for j in 0..i {
            let r: f64 = w.iter().map(|v| v[i] * v[j]).sum::<f64>() / n;
            note(r * n.sqrt(), format!("corr[{i},{j}]"));
        }
    }
    let pooled: Vec<f64> = w.iter().flat_map(|v| v.iter().copied()).collect();
    let std = Normal::new(0.0, 1.0).unwrap();
    // Coordinates are independent, so the pooled sample is i.i.d. under the null.
    let ks = ks_one_sample(&pooled, |x| std.cdf(x));
    let ks_ok = ks.p_value > ALPHA / tests as f64;
    let passed = worst < zc && ks_ok;
    Check::new(
        name,
        passed,
        format!("max|z|={worst:.2} ({what}) crit={zc:.2}, KS p={:.3}, {} draws", ks.p_value, draws.len()),
    )
}

/// Compares scalar draws with a reference CDF (KS) and reference mean
/// (z-test using the sample variance).
pub fn check_scalar<F: Fn(f64) -> f64>(name: &str, draws: &[f64], cdf: F, ref_mean: Option<f64>) -> Check {
    let tests = if ref_mean.is_some() { 2 } else { 1 };
    let ks = ks_one_sample(draws, &cdf);
    let mut ok = ks.p_value > ALPHA / tests as f64;
    let mut detail = format!("KS p={:.3}", ks.p_value);
    if let Some(m) = ref_mean {
        let n = draws.len() as f64;
        let z = (mean(draws) - m) / (variance(draws) / n).sqrt();
        ok &= z.abs() < z_crit(tests);
        detail.push_str(&format!(", mean z={z:.2}"));
    }
    detail.push_str(&format!(", {} draws", draws.len()));
    Check::new(name, ok, detail)
}

/// Probability-integral-transform check: values `F(draw | conditioning)`
/// must be Uniform(0, 1).
pub fn check_uniform(name: &str, u: &[f64]) -> Check {
    let ks = ks_one_sample(u, |x| x.clamp(0.0, 1.0));
    let n = u.len() as f64;
    // Uniform mean 1/2, variance 1/12.
    let z = (mean(u) - 0.5) / (1.0 / (12.0 * n)).sqrt();
    let ok = ks.p_value > ALPHA / 2.0 && z.abs() < z_crit(2);
    Check::new(name, ok, format!("KS p={:.3}, mean z={z:.2}, {} draws", ks.p_value, u.len()))
}

/// Numerically normalized univariate density on `(0, ∞)` or `[lower, ∞)`,
/// given unnormalized on the log scale. Used as an independent oracle for
/// the single-site `λ*²` conditionals.
pub struct LogScaleDensity<F: Fn(f64) -> f64> {
    log_f: F,
    lo: f64,
    hi: f64,
    shift: f64,
    total: f64,
}

impl<F: Fn(f64) -> f64> LogScaleDensity<F> {
    /// `log_f(u)` is the log density of `s = e^u` with respect to `ds`.
    pub fn new(log_f: F, lo: f64, hi: f64) -> Self {
        let steps = 4000;
        let shift = (0..=steps)
            .map(|i| {
                let u = lo + (hi - lo) * i as f64 / steps as f64;
                log_f(u) + u
            })
            .fold(f64::NEG_INFINITY, f64::max);
        let mut d = LogScaleDensity { log_f, lo, hi, shift, total: 1.0 };
        d.total = d.raw(lo, hi);
        d
    }

    fn raw(&self, a: f64, b: f64) -> f64 {
        let g = |u: f64| ((self.log_f)(u) + u - self.shift).exp();
        let pieces = ((b - a) / 0.5).ceil().max(1.0) as usize;
        integrate(g, a, b, pieces, 1e-10, 1e-300).value
    }

    pub fn cdf_many(&self, sorted: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(sorted.len());
        let mut acc = 0.0;
        let mut prev = self.lo;
        for &s in sorted {
            let u = s.ln().clamp(self.lo, self.hi);
            if u > prev {
                acc += self.raw(prev, u);
                prev = u;
            }
            out.push((acc / self.total).min(1.0));
        }
        out
    }

    pub fn expect<G: Fn(f64) -> f64>(&self, g: G) -> f64 {
        let h = |u: f64| g(u) * ((self.log_f)(u) + u - self.shift).exp();
        let pieces = ((self.hi - self.lo) / 0.5).ceil().max(1.0) as usize;
        integrate(h, self.lo, self.hi, pieces, 1e-10, 1e-300).value / self.total
    }
}

/// KS on draws of `s` against a numerically integrated density, plus a
/// z-test on the mean of `log s`.
pub fn check_against_density<F: Fn(f64) -> f64>(name: &str, draws: &[f64], dens: &LogScaleDensity<F>) -> Check {
    let mut sorted = draws.to_vec();
    sorted.sort_by(f64::total_cmp);
    let cdf = dens.cdf_many(&sorted);
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    for (i, f) in cdf.iter().enumerate() {
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    let s = n.sqrt();
    let p = hybridsurf::diagnostics::kolmogorov_q((s + 0.12 + 0.11 / s) * d);
    let logs: Vec<f64> = draws.iter().map(|x| x.ln()).collect();
    let m = dens.expect(|u| u);
    let v = dens.expect(|u| (u - m) * (u - m));
    let z = (mean(&logs) - m) / (v / n).sqrt();
    let ok = p > ALPHA / 2.0 && z.abs() < z_crit(2);
    Check::new(name, ok, format!("KS p={p:.3}, E[log s] z={z:.2}, {} draws", draws.len()))
}

/// Recovers inverse-gamma (shape, rate) from a log density of the form
/// `−(a+1) ln t − r/t + c` evaluated at three points.
pub fn inverse_gamma_from_log<F: Fn(f64) -> f64>(f: F) -> (f64, f64) {
    let ts = [0.5, 1.0, 2.0];
    let y: Vec<f64> = ts.iter().map(|&t| f(t)).collect();
    // y = A ln t + B / t + c
    let m = DMatrix::from_row_slice(3, 3, &[
        ts[0].ln(), 1.0 / ts[0], 1.0,
        ts[1].ln(), 1.0 / ts[1], 1.0,
        ts[2].ln(), 1.0 / ts[2], 1.0,
    ]);
    let c = m.lu().solve(&DVector::from_vec(y)).unwrap();
    (-c[0] - 1.0, -c[1])
}
