//! Random-walk Metropolis on `(log τ², log σ²)` with `β*`, `y*` and `γ`
//! integrated out analytically (λ² held fixed). Used as an independent
//! oracle for the joint behaviour of the Gibbs sampler at toy scale.

use super::*;
use hybridsurf::diagnostics::{effective_sample_size, ks_two_sample};
use hybridsurf::sampler::{run_chain_from, AdaptiveSchedule, FieldScheme, SamplerConfig};

pub struct Collapsed<'a> {
    toy: &'a Toy,
    g: DMatrix<f64>,
    gtg: DMatrix<f64>,
    gtz: DVector<f64>,
    smooth: DMatrix<f64>,
    rough: DMatrix<f64>,
    p: usize,
    q: usize,
}

impl<'a> Collapsed<'a> {
    pub fn new(toy: &'a Toy) -> Self {
        let mats = &toy.model.mats;
        let (n, p, q) = (toy.model.n(), mats.p(), mats.psi.ncols());
        let d = p + q + n;
        let mut g = DMatrix::zeros(n, d);
        g.columns_mut(0, p).copy_from(&mats.x);
        g.columns_mut(p, q).copy_from(&mats.psi);
        g.columns_mut(p + q, n).copy_from(&mats.h);
        let gtg = g.tr_mul(&g);
        let gtz = g.tr_mul(toy.data.sum());

        // (y* − Jγ)ᵀ(y* − Jγ) as a quadratic form in (y*, γ)
        let mut smooth = DMatrix::zeros(d, d);
        let jm = &mats.j;
        smooth.view_mut((p, p), (q, q)).fill_with_identity();
        smooth.view_mut((p, p + q), (q, n)).copy_from(&(-jm));
        smooth.view_mut((p + q, p), (n, q)).copy_from(&(-jm.transpose()));
        smooth.view_mut((p + q, p + q), (n, n)).copy_from(&jm.tr_mul(jm));

        // Q from its definition, column by column
        let lam = &toy.state.scales.lambda2;
        let mut dcols = Vec::with_capacity(n);
        for i in 0..n {
            let mut e = vec![0.0; n];
            e[i] = 1.0;
            dcols.push(toy.model.diff.apply(&e));
        }
        let mut rough = DMatrix::zeros(d, d);
        for i in 0..n {
            for j in 0..n {
                let v: f64 = (0..lam.len()).map(|nu| dcols[i][nu] * dcols[j][nu] / lam[nu]).sum();
                rough[(p + q + i, p + q + j)] = v;
            }
        }
        match toy.model.anchor {
            Anchor::Single { index, weight } => rough[(p + q + index, p + q + index)] += weight,
            Anchor::Ridge { delta } => {
                for i in 0..n {
                    rough[(p + q + i, p + q + i)] += delta;
                }
            }
        }
        Collapsed { toy, g, gtg, gtz, smooth, rough, p, q }
    }

    /// `log p(τ², σ² | z)` up to a constant.
    pub fn log_post(&self, tau2: f64, sigma2: f64) -> f64 {
        let k = self.toy.data.members() as f64;
        let a = &self.gtg * (k / tau2) + &self.smooth / sigma2 + &self.rough;
        let b = &self.gtz / tau2;
        let chol = a.cholesky().expect("collapsed precision not SPD");
        let theta = chol.solve(&b);
        let log_det: f64 = chol.l().diagonal().iter().map(|v| 2.0 * v.ln()).sum();
        let (p, q) = (self.p, self.q);
        let n = self.g.nrows();
        let beta = theta.rows(0, p).into_owned();
        let ystar = theta.rows(p, q).into_owned();
        let gamma = theta.rows(p + q, n).into_owned();
        self.toy.log_joint(&beta, &ystar, &gamma, tau2, sigma2) - 0.5 * log_det
    }

    /// Random-walk Metropolis on the log scale; returns (τ², σ²) draws.
    pub fn sample(&self, steps: usize, step_size: f64, start: (f64, f64), seed: u64) -> (Vec<f64>, Vec<f64>) {
        let mut r = rng(seed);
        let mut u = [start.0.ln(), start.1.ln()];
        let target = |u: &[f64; 2]| self.log_post(u[0].exp(), u[1].exp()) + u[0] + u[1];
        let mut cur = target(&u);
        let (mut t, mut s) = (Vec::with_capacity(steps), Vec::with_capacity(steps));
        for _ in 0..steps {
            let prop = [
                u[0] + step_size * r.sample::<f64, _>(StandardNormal),
                u[1] + step_size * r.sample::<f64, _>(StandardNormal),
            ];
            let next = target(&prop);
            let acc: f64 = r.random();
            if acc.ln() < next - cur {
                u = prop;
                cur = next;
            }
            t.push(u[0].exp());
            s.push(u[1].exp());
        }
        (t, s)
    }
}

/// Keeps roughly one draw per effective sample.
pub fn thin_to_ess(x: &[f64]) -> Vec<f64> {
    let ess = effective_sample_size(x).max(1.0);
    let step = ((x.len() as f64 / ess).ceil() as usize).max(1);
    x.iter().step_by(step).copied().collect()
}

/// Toy used by the joint check: 3×3 grid, intercept-only design, three
/// members, mildly informative variance priors so both variances are well
/// identified.
pub fn joint_toy() -> Toy {
    let mut toy = Toy::build(3, 3, 3, ScalingPrior::normal_jeffreys(), 71, true);
    toy.hyper = Hyperpriors { alpha_tau2: 2.0, beta_tau2: 0.5, alpha_sigma2: 2.0, beta_sigma2: 1.0 };
    toy
}

/// KS comparison of the Gibbs marginals of τ² and σ² with the Metropolis
/// oracle, for the given field-update scheme.
pub fn joint_checks(scheme: FieldScheme) -> Vec<Check> {
    let toy = joint_toy();
    let col = Collapsed::new(&toy);
    let (mt, ms) = col.sample(200_000, 0.6, (toy.state.tau2, toy.state.sigma2), 72);
    let burn = 5_000;
    let (mt, ms) = (thin_to_ess(&mt[burn..]), thin_to_ess(&ms[burn..]));

    let mut cfg = SamplerConfig::new(120_000, 2_000, 73);
    cfg.partial_update_period = 1;
    cfg.adaptive = AdaptiveSchedule::disabled();
    cfg.fixed_scales = true;
    cfg.hyper = toy.hyper;
    cfg.field_scheme = scheme;
    let samples = run_chain_from(toy.state.clone(), &toy.data, &toy.model, &cfg).unwrap();
    let (gt, gs) = (thin_to_ess(&samples.tau2), thin_to_ess(&samples.sigma2));

    let mut out = Vec::new();
    for (name, a, b) in [("tau2", &gt, &mt), ("sigma2", &gs, &ms)] {
        let ks = ks_two_sample(a, b);
        out.push(Check::new(
            format!("joint {name} marginal vs Metropolis ({scheme:?})"),
            ks.p_value > ALPHA,
            format!(
                "KS p={:.3}; medians gibbs={:.4} metropolis={:.4}; {} vs {} thinned draws",
                ks.p_value,
                hybridsurf::diagnostics::median(a),
                hybridsurf::diagnostics::median(b),
                a.len(),
                b.len()
            ),
        ));
    }
    out
}
