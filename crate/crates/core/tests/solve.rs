mod common;

use common::*;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use robcal::numerics::{cholesky_psd, solve_lp};
use robcal::solve::{PsiContext, MEMBERSHIP_TOL};
use robcal::{generate_portfolio, in_s, psi, solve_robust, EllipsoidalUncertainty, SolverConfig};

fn eps2(e1: f64, e2: f64) -> DVector<f64> {
    DVector::from_vec(vec![0.0, e1, e2])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn psi_is_monotone_in_mu(e1 in -3.0f64..3.0, e2 in -3.0f64..3.0, mu in 0.0f64..3.0, extra in 0.0f64..2.0) {
        let p = toy();
        let s = toy_subspace(ToyDomain::Orthant);
        let cfg = SolverConfig::default();
        let a = psi(&p, &s, &toy_sigma(), mu, &eps2(e1, e2), &cfg).unwrap();
        let b = psi(&p, &s, &toy_sigma(), mu + extra, &eps2(e1, e2), &cfg).unwrap();
        prop_assert!(b >= a - 1e-7);
    }

    #[test]
    fn psi_is_symmetric(e1 in -3.0f64..3.0, e2 in -3.0f64..3.0, mu in 0.0f64..3.0) {
        let p = toy();
        let cfg = SolverConfig::default();
        for which in [ToyDomain::Plane, ToyDomain::Orthant, ToyDomain::Axis] {
            let s = toy_subspace(which);
            let a = psi(&p, &s, &toy_sigma(), mu, &eps2(e1, e2), &cfg).unwrap();
            let b = psi(&p, &s, &toy_sigma(), mu, &eps2(-e1, -e2), &cfg).unwrap();
            prop_assert!((a - b).abs() < 1e-7);
        }
    }

    #[test]
    fn membership_scales_jointly(e1 in -3.0f64..3.0, e2 in -3.0f64..3.0, mu in 0.1f64..3.0, t in 0.2f64..5.0) {
        let p = toy();
        let s = toy_subspace(ToyDomain::Orthant);
        let cfg = SolverConfig::default();
        let a = psi(&p, &s, &toy_sigma(), mu, &eps2(e1, e2), &cfg).unwrap();
        let b = psi(&p, &s, &toy_sigma(), t * mu, &eps2(t * e1, t * e2), &cfg).unwrap();
        prop_assert!((b - t * a).abs() < 1e-6 * (1.0 + t));
    }

    #[test]
    fn membership_matches_closed_form(e1 in -3.0f64..3.0, e2 in -3.0f64..3.0, mu in 0.0f64..3.0) {
        let p = toy();
        let cfg = SolverConfig::default();
        for which in [ToyDomain::Plane, ToyDomain::Orthant, ToyDomain::Axis] {
            let margin = toy_analytic(which, mu, e1, e2);
            if margin.abs() < 1e-5 {
                continue;
            }
            let member = in_s(&p, &toy_subspace(which), &toy_sigma(), mu, &eps2(e1, e2), &cfg).unwrap();
            prop_assert_eq!(member, margin > 0.0, "{:?} at ({}, {})", which, e1, e2);
        }
    }

    #[test]
    fn ellipsoid_is_sufficient(w1 in -1.0f64..1.0, w2 in -1.0f64..1.0, w3 in -1.0f64..1.0, mu in 0.0f64..3.0, a in 0.1f64..2.0) {
        let (p, _) = generate_portfolio(3);
        let sigma = sigma_with_dummy(&DMatrix::from_row_slice(3, 3, &[a, 0.2, 0.0, 0.2, 1.0, 0.1, 0.0, 0.1, 0.5]));
        let f = cholesky_psd(&sigma).unwrap();
        let w = DVector::from_vec(vec![0.0, w1, w2, w3]);
        let scale = mu / w.norm().max(1.0);
        let eps = f.l() * &w * scale;
        let u = EllipsoidalUncertainty::new(sigma.clone(), mu).unwrap();
        prop_assert!(u.contains(&eps, 1e-9));
        let s = robcal::Subspace::full(&p);
        prop_assert!(in_s(&p, &s, &sigma, mu, &eps, &SolverConfig::default()).unwrap());
    }
}

#[test]
fn membership_is_midpoint_convex() {
    let p = toy();
    let cfg = SolverConfig::default();
    let ctx = PsiContext::new(&p, &toy_subspace(ToyDomain::Orthant), &cholesky_psd(&toy_sigma()).unwrap()).unwrap();
    let mut g = robcal::RngStream::new(5).generator();
    let mut members = Vec::new();
    use rand::Rng;
    while members.len() < 60 {
        let e = eps2(g.random_range(-2.0..2.0), g.random_range(-2.0..2.0));
        if ctx.membership(1.0, &e, &cfg).unwrap().member {
            members.push(e);
        }
    }
    for i in 0..members.len() {
        for j in (i + 1)..members.len() {
            let mid = (&members[i] + &members[j]) * 0.5;
            assert!(ctx.psi(1.0, &mid, &cfg).unwrap() >= -MEMBERSHIP_TOL);
        }
    }
}

#[test]
fn robust_matches_grid_on_two_items() {
    let (p, _) = generate_portfolio(2);
    let inner = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 0.5]);
    let theta = [-0.4, -0.3];
    for lambda in [0.0, 0.2, 0.5, 1.0] {
        let sol = solve_robust(&p, &with_dummy(&theta), &sigma_with_dummy(&inner), lambda, &SolverConfig::default())
            .unwrap();
        let oracle = grid_oracle(&theta, &inner, lambda, 1e-3);
        assert!(sol.value <= oracle + 1e-7, "{lambda}: {} vs {oracle}", sol.value);
        assert!(oracle - sol.value < 1e-3, "{lambda}: {} vs {oracle}", sol.value);
        assert!(sol.lower <= sol.value + 1e-12);
    }
    let lp = solve_lp(&DVector::from_vec(theta.to_vec()), &p.reduced_domain().unwrap()).unwrap();
    let sol = solve_robust(&p, &with_dummy(&theta), &sigma_with_dummy(&inner), 0.0, &SolverConfig::default()).unwrap();
    assert!((sol.value - lp.value).abs() < 1e-12);
}

#[test]
fn larger_scale_never_improves_value() {
    let (p, _) = generate_portfolio(3);
    let sigma = sigma_with_dummy(&DMatrix::identity(3, 3));
    let theta = with_dummy(&[-1.0, -0.5, 0.2]);
    let mut prev = f64::NEG_INFINITY;
    for k in 0..8 {
        let v = solve_robust(&p, &theta, &sigma, 0.25 * k as f64, &SolverConfig::default()).unwrap().value;
        assert!(v >= prev - 1e-7);
        prev = v;
    }
}
