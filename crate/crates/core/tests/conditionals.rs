//! Every Gibbs conditional against an oracle derived from the joint density.

mod common;

use common::conjugacy as cj;
use common::Check;
use hybridsurf::priors::ScalingPrior;

fn assert_all(checks: &[Check]) {
    for c in checks {
        println!("{} {}: {}", if c.passed { "ok  " } else { "FAIL" }, c.name, c.detail);
    }
    assert!(checks.iter().all(|c| c.passed));
}

#[test]
fn beta_single_and_ensemble() {
    assert_all(&[cj::beta(1), cj::beta(3)]);
}

#[test]
fn ystar_single_and_ensemble() {
    assert_all(&[cj::ystar(1), cj::ystar(3)]);
}

#[test]
fn gamma_centered() {
    assert_all(&[cj::gamma(1), cj::gamma(3)]);
}

#[test]
fn gamma_noncentered() {
    assert_all(&[cj::gamma_noncentered(1), cj::gamma_noncentered(3)]);
}

#[test]
fn nugget_and_smooth_variance() {
    let hs = ScalingPrior::new(hybridsurf::priors::Mixing::Horseshoe {
        v: vec![1.0; 12],
        t2: 0.7,
        a: 2.0,
        scale: 1.0,
    })
    .unwrap();
    assert_all(&[
        cj::tau2(ScalingPrior::normal_jeffreys(), 1),
        cj::tau2(ScalingPrior::normal_jeffreys(), 3),
        cj::tau2(hs, 1),
        cj::sigma2(),
    ]);
}

#[test]
fn lambda_single_site_all_priors() {
    let mut checks = Vec::new();
    for p in cj::priors_for_sites() {
        for d in [0.3, 2.0] {
            checks.push(cj::lambda_site(p.clone(), d));
        }
    }
    assert_all(&checks);
}

#[test]
fn hyperlatents_all_priors() {
    let checks: Vec<Check> = cj::priors_for_hyper().into_iter().flat_map(cj::hyperlatents).collect();
    assert_all(&checks);
}
