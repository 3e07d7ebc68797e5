//! Single-site checks of every Gibbs conditional against oracles built from
//! the joint density.

use super::*;
use hybridsurf::priors::inv_gamma;
use hybridsurf::sampler::{
    draw_beta, draw_gamma, draw_gamma_noncentered, draw_ystar, sigma2_conditional, tau2_conditional,
};
use statrs::distribution::{Gamma, InverseGamma};

fn nj() -> ScalingPrior {
    ScalingPrior::normal_jeffreys()
}

fn horseshoe(m: usize) -> ScalingPrior {
    ScalingPrior::new(Mixing::Horseshoe { v: vec![1.3; m], t2: 0.7, a: 2.0, scale: 1.0 }).unwrap()
}

pub fn beta(members: usize) -> Check {
    let toy = Toy::new(3, 3, members, nj(), 11 + members as u64);
    let s = &toy.state;
    let (a, m) = gaussian_from_quadratic(3, |b| toy.log_joint(b, &s.ystar, &s.gamma, s.tau2, s.sigma2));
    let mut r = rng(101);
    let draws: Vec<_> = (0..DRAWS).map(|_| draw_beta(s, &toy.data, &toy.model, &mut r).unwrap()).collect();
    check_gaussian(&format!("beta* (k={members})"), &draws, &m, &a)
}

pub fn ystar(members: usize) -> Check {
    let toy = Toy::new(3, 3, members, nj(), 21 + members as u64);
    let s = &toy.state;
    let dim = s.ystar.len();
    let (a, m) = gaussian_from_quadratic(dim, |y| toy.log_joint(&s.beta, y, &s.gamma, s.tau2, s.sigma2));
    let mut r = rng(102);
    let draws: Vec<_> = (0..DRAWS).map(|_| draw_ystar(s, &toy.data, &toy.model, &mut r).unwrap()).collect();
    check_gaussian(&format!("y* (k={members})"), &draws, &m, &a)
}

pub fn gamma(members: usize) -> Check {
    let toy = Toy::new(3, 3, members, nj(), 31 + members as u64);
    let s = &toy.state;
    let n = toy.model.n();
    let (a, m) = gaussian_from_quadratic(n, |g| toy.log_joint(&s.beta, &s.ystar, g, s.tau2, s.sigma2));
    let mut r = rng(103);
    let draws: Vec<_> = (0..DRAWS).map(|_| draw_gamma(s, &toy.data, &toy.model, &mut r).unwrap()).collect();
    check_gaussian(&format!("gamma | y* (k={members})"), &draws, &m, &a)
}

/// `γ` given `ỹ = y* − Jγ`, i.e. the joint density with `y* = ỹ + Jγ`.
pub fn gamma_noncentered(members: usize) -> Check {
    let toy = Toy::new(3, 3, members, nj(), 41 + members as u64);
    let s = &toy.state;
    let n = toy.model.n();
    let j = &toy.model.mats.j;
    let ytilde = &s.ystar - j * &s.gamma;
    let (a, m) = gaussian_from_quadratic(n, |g| {
        let y = &ytilde + j * g;
        toy.log_joint(&s.beta, &y, g, s.tau2, s.sigma2)
    });
    let mut r = rng(104);
    let draws: Vec<_> = (0..DRAWS)
        .map(|_| draw_gamma_noncentered(s, &ytilde, &toy.data, &toy.model, &mut r).unwrap())
        .collect();
    check_gaussian(&format!("gamma | y~ (k={members})"), &draws, &m, &a)
}

fn inverse_gamma_check(name: &str, oracle: (f64, f64), draws: &[f64]) -> Check {
    let (shape, rate) = oracle;
    let d = InverseGamma::new(shape, rate).unwrap();
    let mean = (shape > 1.0).then(|| rate / (shape - 1.0));
    let mut c = check_scalar(name, draws, |x| d.cdf(x), mean);
    c.detail = format!("oracle IG({shape:.4}, {rate:.4}); {}", c.detail);
    c
}

pub fn tau2(prior: ScalingPrior, members: usize) -> Check {
    let label = prior.name();
    let toy = Toy::new(3, 3, members, prior, 51 + members as u64);
    let s = &toy.state;
    let oracle = inverse_gamma_from_log(|t| toy.log_joint(&s.beta, &s.ystar, &s.gamma, t, s.sigma2));
    let (shape, rate) = tau2_conditional(s, &toy.data, &toy.model, &toy.hyper);
    let mut r = rng(105);
    let draws: Vec<f64> = (0..DRAWS).map(|_| inv_gamma(shape, rate, &mut r)).collect();
    inverse_gamma_check(&format!("tau2 ({label}, k={members})"), oracle, &draws)
}

pub fn sigma2() -> Check {
    let toy = Toy::new(3, 3, 1, nj(), 61);
    let s = &toy.state;
    let oracle = inverse_gamma_from_log(|v| toy.log_joint(&s.beta, &s.ystar, &s.gamma, s.tau2, v));
    let (shape, rate) = sigma2_conditional(s, &toy.model, &toy.hyper);
    let mut r = rng(106);
    let draws: Vec<f64> = (0..DRAWS).map(|_| inv_gamma(shape, rate, &mut r)).collect();
    inverse_gamma_check("sigma2", oracle, &draws)
}

/// Runs the prior's update on a single difference and returns the `λ*²` draws.
fn single_site(prior: &ScalingPrior, d: f64, seed: u64) -> Vec<f64> {
    let mut r = rng(seed);
    (0..DRAWS)
        .map(|_| {
            let mut p = prior.clone();
            let mut sc = Scales::constant(1, 1.0);
            p.update_lambda_posterior(&[d], &mut sc, 0.5, &mut r, None).unwrap();
            sc.star[0]
        })
        .collect()
}

/// `λ*²` single-site conditional: normal likelihood of the difference
/// times the mixing density, integrated numerically.
pub fn lambda_site(prior: ScalingPrior, d: f64) -> Check {
    let lik = move |u: f64| -0.5 * u - 0.5 * d * d * (-u).exp();
    let draws = single_site(&prior, d, 200 + (d * 100.0) as u64);
    let name = format!("lambda*2 ({}, d={d})", prior.name());
    match prior.mixing {
        Mixing::NormalJeffreys { log_lower, log_upper } => {
            let dens = LogScaleDensity::new(move |u| lik(u) - u, log_lower.max(-200.0), log_upper.min(200.0));
            check_against_density(&name, &draws, &dens)
        }
        Mixing::Laplace { b2 } => {
            let dens = LogScaleDensity::new(move |u| lik(u) - 0.5 * b2 * u.exp(), -60.0, 20.0);
            check_against_density(&name, &draws, &dens)
        }
        Mixing::Cauchy { b2 } => {
            let dens = LogScaleDensity::new(move |u| lik(u) - 1.5 * u - 0.5 / b2 * (-u).exp(), -60.0, 200.0);
            check_against_density(&name, &draws, &dens)
        }
        Mixing::Horseshoe { ref v, .. } => {
            let v0 = v[0];
            let dens = LogScaleDensity::new(move |u| lik(u) - 1.5 * u - (-u).exp() / v0, -60.0, 200.0);
            check_against_density(&name, &draws, &dens)
        }
        Mixing::Pareto { alpha, lambda2_min } => {
            let lo = lambda2_min.ln();
            let dens = LogScaleDensity::new(move |u| lik(u) - (alpha + 1.0) * u, lo, 200.0);
            let below = draws.iter().filter(|&&s| s < lambda2_min).count();
            let mut c = check_against_density(&name, &draws, &dens);
            c.passed &= below == 0;
            c
        }
    }
}

fn diffs5() -> Vec<f64> {
    vec![0.05, -0.4, 1.2, 0.0, 2.5]
}

/// One full pass with five differences; returns (prior before, prior after,
/// scales after) for each repetition.
fn passes(prior: &ScalingPrior, seed: u64) -> Vec<(ScalingPrior, Scales)> {
    let d = diffs5();
    let mut r = rng(seed);
    (0..DRAWS)
        .map(|_| {
            let mut p = prior.clone();
            let mut sc = Scales::constant(d.len(), 1.0);
            p.update_lambda_posterior(&d, &mut sc, 0.5, &mut r, None).unwrap();
            (p, sc)
        })
        .collect()
}

/// PIT checks for every hyperlatent given the freshly drawn `λ*²`.
pub fn hyperlatents(prior: ScalingPrior) -> Vec<Check> {
    let m = diffs5().len() as f64;
    let out = passes(&prior, 300 + prior.name() as u64);
    let label = prior.name();
    let mut checks = Vec::new();
    match prior.mixing {
        Mixing::Laplace { .. } => {
            let u: Vec<f64> = out
                .iter()
                .map(|(p, sc)| {
                    let Mixing::Laplace { b2 } = p.mixing else { unreachable!() };
                    let rate = 0.5 * sc.star.iter().sum::<f64>();
                    Gamma::new(m, rate).unwrap().cdf(b2)
                })
                .collect();
            checks.push(check_uniform(&format!("b2 | lambda ({label})"), &u));
        }
        Mixing::Cauchy { .. } => {
            let u: Vec<f64> = out
                .iter()
                .map(|(p, sc)| {
                    let Mixing::Cauchy { b2 } = p.mixing else { unreachable!() };
                    let rate: f64 = sc.star.iter().map(|s| 0.5 / s).sum();
                    InverseGamma::new(0.5 * m, rate).unwrap().cdf(b2)
                })
                .collect();
            checks.push(check_uniform(&format!("b2 | lambda ({label})"), &u));
        }
        Mixing::Horseshoe { t2: t2_old, a: a_old, .. } => {
            let (mut uv, mut ut, mut ua) = (Vec::new(), Vec::new(), Vec::new());
            for (p, sc) in &out {
                let Mixing::Horseshoe { ref v, t2, a, .. } = p.mixing else { unreachable!() };
                for (vi, s) in v.iter().zip(&sc.star) {
                    uv.push(InverseGamma::new(1.0, 1.0 / s + 1.0 / t2_old).unwrap().cdf(*vi));
                }
                let inv_v: f64 = v.iter().map(|x| 1.0 / x).sum();
                ut.push(InverseGamma::new(0.5 * (m + 1.0), inv_v + 1.0 / a_old).unwrap().cdf(t2));
                ua.push(InverseGamma::new(1.0, 1.0 / t2 + 1.0 / 0.5).unwrap().cdf(a));
            }
            // Each draw contributes m independent v values; keep one per draw for i.i.d. KS.
            let uv: Vec<f64> = uv.chunks(m as usize).map(|c| c[2]).collect();
            checks.push(check_uniform(&format!("v | lambda, t2 ({label})"), &uv));
            checks.push(check_uniform(&format!("t2 | v, a ({label})"), &ut));
            checks.push(check_uniform(&format!("a | t2, tau2 ({label})"), &ua));
        }
        Mixing::Pareto { lambda2_min: min_old, .. } => {
            let (mut ua, mut um) = (Vec::new(), Vec::new());
            for (p, sc) in &out {
                let Mixing::Pareto { alpha, lambda2_min } = p.mixing else { unreachable!() };
                let excess: f64 = sc.star.iter().map(|s| (s / min_old).ln()).sum();
                ua.push(Gamma::new(m, excess).unwrap().cdf(alpha));
                let smallest = sc.star.iter().copied().fold(f64::INFINITY, f64::min);
                um.push((lambda2_min / smallest).powf(m * alpha));
            }
            checks.push(check_uniform(&format!("alpha | lambda, min ({label})"), &ua));
            checks.push(check_uniform(&format!("lambda2_min | lambda, alpha ({label})"), &um));
        }
        Mixing::NormalJeffreys { .. } => {}
    }
    checks
}

pub fn priors_for_sites() -> Vec<ScalingPrior> {
    vec![
        ScalingPrior::laplace(1.5).unwrap(),
        horseshoe(1),
        ScalingPrior::cauchy(0.8).unwrap(),
        ScalingPrior::pareto(0.7, 0.05).unwrap(),
        nj(),
    ]
}

pub fn priors_for_hyper() -> Vec<ScalingPrior> {
    vec![
        ScalingPrior::laplace(1.5).unwrap(),
        horseshoe(5),
        ScalingPrior::cauchy(0.8).unwrap(),
        ScalingPrior::pareto(0.7, 0.05).unwrap(),
    ]
}

/// The whole suite.
pub fn all() -> Vec<Check> {
    let mut c = Vec::new();
    for k in [1, 3] {
        c.push(beta(k));
        c.push(ystar(k));
        c.push(gamma(k));
        c.push(gamma_noncentered(k));
        c.push(tau2(nj(), k));
    }
    c.push(tau2(horseshoe(12), 1));
    c.push(sigma2());
    for p in priors_for_sites() {
        for d in [0.3, 2.0] {
            c.push(lambda_site(p.clone(), d));
        }
    }
    for p in priors_for_hyper() {
        c.extend(hyperlatents(p));
    }
    c
}
