//! `min f(x)` over `{x ∈ 𝒳 : g_k(x, θ) − λ r_k(x; Σ) ≥ 0 ∀k}`.

use nalgebra::{DMatrix, DVector};

use super::linnorm::{minimize, minimize_subgradient, LinearPlusNorm, Lmo, StopRule};
use super::{Method, SolverConfig};
use crate::error::{check_dim, Error, Result};
use crate::model::ProblemSpec;
use crate::numerics::{cholesky_psd, solve_lp, CholFactor};

#[derive(Debug, Clone, PartialEq)]
pub struct RobustSolution {
    pub x: DVector<f64>,
    pub value: f64,
    /// Certified lower bound on the optimal value.
    pub lower: f64,
    pub iterations: usize,
}

pub fn solve_robust(
    problem: &ProblemSpec,
    theta: &DVector<f64>,
    sigma: &DMatrix<f64>,
    lambda: f64,
    cfg: &SolverConfig,
) -> Result<RobustSolution> {
    solve_robust_factored(problem, theta, &cholesky_psd(sigma)?, lambda, cfg)
}

pub fn solve_robust_factored(
    problem: &ProblemSpec,
    theta: &DVector<f64>,
    factor: &CholFactor,
    lambda: f64,
    cfg: &SolverConfig,
) -> Result<RobustSolution> {
    check_dim("parameter vector", problem.d, theta.len())?;
    check_dim("covariance", problem.d, factor.dim())?;
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    match problem.epigraph_var {
        Some(e) => solve_epigraph(problem, e, theta, factor, lambda, cfg),
        None => solve_cutting_plane(problem, theta, factor, lambda, cfg),
    }
}

/// The epigraph variable takes its binding value; the rest is a linear-plus-norm problem.
fn solve_epigraph(
    problem: &ProblemSpec,
    e: usize,
    theta: &DVector<f64>,
    factor: &CholFactor,
    lambda: f64,
    cfg: &SolverConfig,
) -> Result<RobustSolution> {
    let map = &problem.constraints[0];
    let alpha: f64 = (0..problem.d).map(|j| theta[j] * map.a[(j, e)]).sum();
    if !(alpha > 0.0) {
        return Err(Error::InvalidProblem(
            "epigraph variable must enter its constraint with positive weight".into(),
        ));
    }
    let domain = problem.reduced_domain()?;
    let rest: Vec<usize> = (0..problem.m).filter(|&i| i != e).collect();
    let a = DMatrix::from_fn(problem.d, rest.len(), |r, c| map.a[(r, rest[c])]);
    let lt = factor.lt_active();
    // α x_e ≥ −θᵀ(A x + c) + λ‖Lᵀ(A x + c)‖
    let obj = LinearPlusNorm {
        linear: -a.tr_mul(theta) / alpha,
        offset: -theta.dot(&map.c) / alpha,
        weight: lambda / alpha,
        norm_map: lt * &a,
        norm_offset: lt * &map.c,
    };
    let lmo = Lmo::new(&domain);
    let sol = match cfg.method {
        Method::ProjectedSubgradient if matches!(lmo, Lmo::Simplex { .. }) => {
            minimize_subgradient(&obj, &lmo, cfg)?
        }
        _ => minimize(&obj, &lmo, cfg, StopRule::Value)?,
    };
    let mut x = DVector::zeros(problem.m);
    for (c, &i) in rest.iter().enumerate() {
        x[i] = sol.y[c];
    }
    let value = obj.value(&sol.y);
    x[e] = value;
    let value = problem.objective_value(&x);
    if !sol.converged {
        return Err(Error::NonConvergence {
            iterations: sol.iterations,
            gap: sol.gap(),
            best_value: value,
            best: x.iter().copied().collect(),
        });
    }
    Ok(RobustSolution {
        x,
        value,
        lower: sol.lower,
        iterations: sol.iterations,
    })
}

/// Kelley's cutting planes: every cut `θᵀv − λ sᵀLᵀv ≥ 0` with `‖s‖ ≤ 1` is valid.
fn solve_cutting_plane(
    problem: &ProblemSpec,
    theta: &DVector<f64>,
    factor: &CholFactor,
    lambda: f64,
    cfg: &SolverConfig,
) -> Result<RobustSolution> {
    let lt = factor.lt_active();
    let mut poly = problem.domain.clone();
    let mut last = None;
    for it in 0..cfg.max_iters {
        let sol = match solve_lp(&problem.objective, &poly) {
            Ok(s) => s,
            Err(Error::Infeasible) => return Err(Error::RobustInfeasible),
            Err(e) => return Err(e),
        };
        let tol = cfg.tol * (1.0 + sol.x.amax());
        let mut feasible = true;
        for map in &problem.constraints {
            let v = map.apply(&sol.x);
            let w = lt * &v;
            let nw = w.norm();
            let slack = theta.dot(&v) - lambda * nw;
            if slack < -tol {
                feasible = false;
                let s = if nw > 0.0 { w / nw } else { DVector::zeros(lt.nrows()) };
                // −(Aᵀθ − λ AᵀL s)ᵀx ≤ θᵀc − λ sᵀLᵀc
                let grad = map.a.tr_mul(theta) - map.a.tr_mul(&lt.tr_mul(&s)) * lambda;
                let rhs = theta.dot(&map.c) - lambda * s.dot(&(lt * &map.c));
                poly = poly.with_row(&(-grad), rhs);
            }
        }
        if feasible {
            return Ok(RobustSolution {
                value: sol.value,
                lower: sol.value,
                x: sol.x,
                iterations: it + 1,
            });
        }
        last = Some(sol);
    }
    let last = last.expect("at least one iteration");
    Err(Error::NonConvergence {
        iterations: cfg.max_iters,
        gap: f64::NAN,
        best_value: last.value,
        best: last.x.iter().copied().collect(),
    })
}
