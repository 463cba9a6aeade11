mod common;

use common::*;
use robcal::numerics::{chi_quantile, cholesky_psd, sample_mvn_batch};
use robcal::solve::PsiContext;
use robcal::spatial_bound::{empirical_membership_rate, estimate_mu_with_samples, num_samples};
use robcal::{estimate_mu, AccuracyParams, RngStream, SolverConfig, Subspace};

#[test]
fn singleton_matches_one_dimensional_quantile() {
    let p = singleton();
    let sigma = toy_sigma();
    let acc = AccuracyParams::new(0.05, 0.02, 0.01).unwrap();
    let est = estimate_mu(0.9, &p, &Subspace::full(&p), &sigma, &acc, &SolverConfig::default(), &RngStream::new(3))
        .unwrap();
    assert_eq!(est.q_samples, num_samples(0.05, 0.02));
    assert!((est.mu_dot - chi_quantile(1, 0.9).unwrap()).abs() < 0.1, "{est:?}");
    assert!(est.bracket.0 <= est.mu_dot && est.mu_dot <= est.bracket.1);
}

#[test]
fn full_plane_matches_two_dimensional_quantile() {
    let p = toy();
    let acc = AccuracyParams::new(0.05, 0.02, 0.01).unwrap();
    let est = estimate_mu(
        0.8,
        &p,
        &toy_subspace(ToyDomain::Plane),
        &toy_sigma(),
        &acc,
        &SolverConfig::default(),
        &RngStream::new(8),
    )
    .unwrap();
    // S over the plane is the disc, so the threshold is the χ₂ quantile
    assert!((est.mu_dot - chi_quantile(2, 0.8).unwrap()).abs() < 0.12, "{est:?}");
}

#[test]
fn zero_target_gives_zero() {
    let p = toy();
    let acc = AccuracyParams::new(0.1, 0.1, 0.01).unwrap();
    let est = estimate_mu(0.0, &p, &toy_subspace(ToyDomain::Axis), &toy_sigma(), &acc, &SolverConfig::default(), &RngStream::new(1))
        .unwrap();
    assert_eq!(est.mu_dot, 0.0);
    assert_eq!(est.iterations, 0);
}

#[test]
fn membership_rate_follows_closed_form() {
    let p = toy();
    let f = cholesky_psd(&toy_sigma()).unwrap();
    let xs = sample_mvn_batch(&f, &RngStream::new(2), 400);
    let cfg = SolverConfig::default();
    for which in [ToyDomain::Plane, ToyDomain::Orthant, ToyDomain::Axis] {
        let ctx = PsiContext::new(&p, &toy_subspace(which), &f).unwrap();
        let q = empirical_membership_rate(1.3, &xs, &ctx, &cfg).unwrap();
        let expected = xs.iter().filter(|e| toy_analytic(which, 1.3, e[1], e[2]) >= 0.0).count() as f64 / 400.0;
        assert_eq!(q, expected, "{which:?}");
    }
}

#[test]
fn shared_samples_respect_inclusion() {
    let p = toy();
    let f = cholesky_psd(&toy_sigma()).unwrap();
    let xs = sample_mvn_batch(&f, &RngStream::new(9), 600);
    let acc = AccuracyParams::new(0.05, 0.02, 0.01).unwrap();
    let cfg = SolverConfig::default();
    let mu = |w| {
        let ctx = PsiContext::new(&p, &toy_subspace(w), &f).unwrap();
        estimate_mu_with_samples(0.85, &ctx, &xs, 2, &acc, &cfg).unwrap().mu_dot
    };
    let (plane, orthant, axis) = (mu(ToyDomain::Plane), mu(ToyDomain::Orthant), mu(ToyDomain::Axis));
    assert!(axis <= orthant && orthant <= plane, "{axis} {orthant} {plane}");
}
