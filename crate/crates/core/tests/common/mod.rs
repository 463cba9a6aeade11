#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use robcal::numerics::Polyhedron;
use robcal::{cholesky_psd, ProblemSpec, SensitivityMap, Subspace};

/// `min x1 + x2` s.t. `θ1 x1 + θ2 x2 − 2 ≥ 0`, with the constant carried by a dummy `θ0`.
pub fn toy() -> ProblemSpec {
    ProblemSpec {
        m: 2,
        d: 3,
        objective: DVector::from_vec(vec![1.0, 1.0]),
        constraints: vec![SensitivityMap {
            a: DMatrix::from_row_slice(3, 2, &[0.0, 0.0, 1.0, 0.0, 0.0, 1.0]),
            c: DVector::from_vec(vec![-2.0, 0.0, 0.0]),
        }],
        domain: Polyhedron::boxed(&[-1.0, -1.0], &[1.0, 1.0]),
        dummy_coords: vec![0],
        epigraph_var: None,
    }
}

pub fn toy_sigma() -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_vec(vec![0.0, 1.0, 1.0]))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ToyDomain {
    Plane,
    Orthant,
    Axis,
}

/// S is invariant under positive scaling of 𝒴, so unit boxes stand in for the cones.
pub fn toy_subspace(which: ToyDomain) -> Subspace {
    let base = match which {
        ToyDomain::Plane => Polyhedron::boxed(&[-1.0, -1.0], &[1.0, 1.0]),
        ToyDomain::Orthant => Polyhedron::boxed(&[0.0, 0.0], &[1.0, 1.0]),
        ToyDomain::Axis => Polyhedron::boxed(&[0.0, 0.0], &[1.0, 0.0]),
    };
    Subspace::with_base(&toy(), base)
}

/// Closed-form membership of `(e1, e2)` in `S(λ, 𝒴; I)` for the toy domains.
pub fn toy_analytic(which: ToyDomain, lambda: f64, e1: f64, e2: f64) -> f64 {
    // returns λ minus the binding norm: nonnegative iff member
    match which {
        ToyDomain::Plane => lambda - e1.hypot(e2),
        ToyDomain::Orthant => {
            let pos = e1.max(0.0).hypot(e2.max(0.0));
            let neg = e1.min(0.0).hypot(e2.min(0.0));
            lambda - pos.max(neg)
        }
        ToyDomain::Axis => lambda - e1.abs(),
    }
}

/// A problem whose domain is the single point `x = 1` with `v(x) = (0, x, x/2)`.
pub fn singleton() -> ProblemSpec {
    ProblemSpec {
        m: 1,
        d: 3,
        objective: DVector::from_vec(vec![1.0]),
        constraints: vec![SensitivityMap {
            a: DMatrix::from_row_slice(3, 1, &[0.0, 1.0, 0.5]),
            c: DVector::from_vec(vec![1.0, 0.0, 0.0]),
        }],
        domain: Polyhedron::boxed(&[1.0], &[1.0]),
        dummy_coords: vec![0],
        epigraph_var: None,
    }
}

pub fn with_dummy(theta: &[f64]) -> DVector<f64> {
    DVector::from_iterator(theta.len() + 1, std::iter::once(1.0).chain(theta.iter().copied()))
}

pub fn sigma_with_dummy(inner: &DMatrix<f64>) -> DMatrix<f64> {
    let d = inner.nrows();
    DMatrix::from_fn(d + 1, d + 1, |i, j| if i == 0 || j == 0 { 0.0 } else { inner[(i - 1, j - 1)] })
}

/// `min θᵀy + λ‖Σ^{1/2}y‖` over `{y ≥ 0, Σy ≤ 1}` on a grid of the given step.
pub fn grid_oracle(theta: &[f64], sigma: &DMatrix<f64>, lambda: f64, step: f64) -> f64 {
    let l = cholesky_psd(sigma).unwrap().l().clone();
    let k = (1.0 / step).round() as usize;
    let d = theta.len();
    let mut best = f64::INFINITY;
    let mut idx = vec![0usize; d];
    let mut w = DVector::zeros(d);
    loop {
        // value at the current grid point
        let mut lin = 0.0;
        for i in 0..d {
            lin += theta[i] * idx[i] as f64 * step;
        }
        w.fill(0.0);
        for i in 0..d {
            if idx[i] > 0 {
                let yi = idx[i] as f64 * step;
                for j in 0..d {
                    w[j] += l[(i, j)] * yi;
                }
            }
        }
        best = best.min(lin + lambda * w.norm());
        let mut pos = 0;
        loop {
            if pos == d {
                return best;
            }
            idx[pos] += 1;
            if idx.iter().sum::<usize>() <= k {
                break;
            }
            idx[pos] = 0;
            pos += 1;
        }
    }
}
