//! Two-stage domain reduction producing the calibrated scale λ̂, and the χ baselines.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::{covariance_sandwich, empirical_moments, eta, EmpiricalEstimate, C1};
use crate::model::ProblemSpec;
use crate::numerics::{chi_quantile, cholesky_psd, RngStream};
use crate::solve::{in_s, solve_robust, Margin, NormMode, SolverConfig, Subspace};
use crate::spatial_bound::{estimate_mu, AccuracyParams, MuEstimate};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Berry–Esseen corrections zeroed (`c_d τ = 0`, `τ' = 0`).
    Practical,
    Theoretical,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlgoConstants {
    pub alpha_n: f64,
    pub beta_n: f64,
    pub gamma_n: f64,
    pub eta_n: f64,
    pub delta_n: f64,
    pub c_d: f64,
    pub tau: f64,
    pub tau_prime: f64,
}

/// Finite-sample constants; practical mode zeroes `τ` and `τ'` first.
pub fn algo_constants(n: usize, d: usize, delta: f64, tau: f64, tau_prime: f64, mode: Mode) -> AlgoConstants {
    let (tau, tau_prime) = match mode {
        Mode::Practical => (0.0, 0.0),
        Mode::Theoretical => (tau, tau_prime),
    };
    let sn = (n as f64).sqrt();
    let df = d as f64;
    let c_d = 400.0 * df.powf(0.25);
    AlgoConstants {
        alpha_n: delta / sn,
        beta_n: c_d * tau / sn,
        gamma_n: 1.0 / sn,
        eta_n: eta(d, n, df * df * C1 * tau_prime / sn, tau_prime),
        delta_n: (2.0 * df * df * C1 * tau_prime + 4.0 * c_d * tau + delta) / sn,
        c_d,
        tau,
        tau_prime,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationConfig {
    pub solver: SolverConfig,
    /// Slack sizing the Monte-Carlo sample when the threshold slack `β_n` is zero.
    pub sample_beta: f64,
    /// `None` picks the linear surrogate with `κ = √d`.
    pub norm_mode: Option<NormMode>,
    pub moment_bounds: Option<(f64, f64)>,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig {
            solver: SolverConfig::default(),
            sample_beta: 0.05,
            norm_mode: None,
            moment_bounds: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub lambda_hat: f64,
    pub sqrt_n_lambda_hat: f64,
    pub mu_dot: f64,
    pub mu_hat: f64,
    pub w_hat: f64,
    pub lambda_dot: f64,
    pub stage1: MuEstimate,
    pub stage2: MuEstimate,
    pub subspace: Subspace,
    pub mode: Mode,
    pub constants: AlgoConstants,
    pub n: usize,
    pub d: usize,
    pub delta: f64,
    pub kappa: Option<f64>,
    pub rng: RngStream,
}

/// `Ŷ(w, μ)`: value cap `w` and margin `μ` around `(θ̂, Σ̂)`.
pub fn reduced_domain(
    problem: &ProblemSpec,
    estimate: &EmpiricalEstimate,
    w_hat: f64,
    mu: f64,
    norm_mode: NormMode,
) -> Subspace {
    Subspace {
        value_cap: Some(w_hat),
        margin: Some(Margin {
            mu,
            theta_ref: estimate.theta_hat.clone(),
            sigma_ref: estimate.sigma_hat.clone(),
        }),
        norm_mode,
        ..Subspace::full(problem)
    }
}

pub fn default_norm_mode(problem: &ProblemSpec) -> NormMode {
    NormMode::LinearSurrogate {
        kappa: (problem.free_dim().max(1) as f64).sqrt(),
    }
}

pub fn calibrate_scale(
    problem: &ProblemSpec,
    samples: &[DVector<f64>],
    delta: f64,
    cfg: &CalibrationConfig,
    mode: Mode,
    rng: &RngStream,
) -> Result<CalibrationResult> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidArgument(format!("delta must be in (0, 1), got {delta}")));
    }
    let bounds = match mode {
        Mode::Practical => Some((0.0, 0.0)),
        Mode::Theoretical => cfg.moment_bounds,
    };
    let est = empirical_moments(samples, bounds, &problem.dummy_coords)?;
    calibrate_from_estimate(problem, &est, delta, cfg, mode, rng)
}

pub fn calibrate_from_estimate(
    problem: &ProblemSpec,
    est: &EmpiricalEstimate,
    delta: f64,
    cfg: &CalibrationConfig,
    mode: Mode,
    rng: &RngStream,
) -> Result<CalibrationResult> {
    let n = est.n;
    let d = problem.free_dim().max(1);
    let k = algo_constants(n, d, delta, est.tau, est.tau_prime, mode);
    if !(k.eta_n < 1.0) {
        return Err(Error::VacuousBound(format!("eta_n = {} at n = {n}", k.eta_n)));
    }
    let acc = if k.beta_n > 0.0 {
        if k.beta_n >= 1.0 {
            return Err(Error::VacuousBound(format!("beta_n = {} at n = {n}", k.beta_n)));
        }
        AccuracyParams::new(k.alpha_n, k.beta_n, k.gamma_n)?
    } else {
        AccuracyParams::practical(k.alpha_n, k.gamma_n, cfg.sample_beta)?
    };
    let (lower, upper) = covariance_sandwich(k.eta_n);
    let sn = (n as f64).sqrt();

    // stage 1: spatial bound on the whole domain
    let p1 = 1.0 - 2.0 * k.c_d * est.tau / sn;
    let full = Subspace::full(problem);
    let stage1 = estimate_mu(p1, problem, &full, &est.sigma_hat, &acc, &cfg.solver, &rng.fork(1))
        .map_err(|e| e.at_stage(1))?;
    let mu_dot = stage1.mu_dot;
    let mu_hat = upper * mu_dot / (lower * lower * sn);

    // stage 3: value of the robust solution at 3μ̂
    let inflated = &est.sigma_hat / lower;
    let w_hat = solve_robust(problem, &est.theta_hat, &inflated, 3.0 * mu_hat, &cfg.solver)
        .map_err(|e| e.at_stage(3))?
        .value;

    let norm_mode = cfg.norm_mode.unwrap_or_else(|| default_norm_mode(problem));
    let subspace = reduced_domain(problem, est, w_hat, mu_hat / lower, norm_mode);
    subspace.polyhedron().map_err(|e| e.at_stage(4))?;

    // stage 5: spatial bound on the reduced domain, fresh samples
    let p2 = 1.0 - delta + k.delta_n;
    let stage2 = estimate_mu(p2, problem, &subspace, &est.sigma_hat, &acc, &cfg.solver, &rng.fork(2))
        .map_err(|e| e.at_stage(5))?;
    let lambda_dot = stage2.mu_dot;
    let lambda_hat = lambda_dot / ((1.0 - k.gamma_n) * sn);

    Ok(CalibrationResult {
        lambda_hat,
        sqrt_n_lambda_hat: lambda_hat * sn,
        mu_dot,
        mu_hat,
        w_hat,
        lambda_dot,
        stage1,
        stage2,
        kappa: match norm_mode {
            NormMode::LinearSurrogate { kappa } => Some(kappa),
            NormMode::ExactL2 => None,
        },
        subspace,
        mode,
        constants: k,
        n,
        d,
        delta,
        rng: rng.clone(),
    })
}

/// `(χ₁⁻¹(1 − δ)/√n, χ_d⁻¹(1 − δ)/√n)`.
pub fn baseline_scales(n: usize, d: usize, delta: f64) -> Result<(f64, f64)> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be >= 1".into()));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidArgument(format!("delta must be in (0, 1), got {delta}")));
    }
    let sn = (n as f64).sqrt();
    Ok((chi_quantile(1, 1.0 - delta)? / sn, chi_quantile(d.max(1), 1.0 - delta)? / sn))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalityCheck {
    pub hypotheses: bool,
    /// `None` when the hypotheses fail and the conclusion was not asserted.
    pub conclusion: Option<bool>,
    pub values: Vec<f64>,
    pub report: Vec<String>,
}

impl InequalityCheck {
    pub fn holds(&self) -> bool {
        self.conclusion != Some(false)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SandwichReport {
    /// `f*(x(λ; θ)) ≤ f*(x(2λ; θ*))`.
    pub comparison: InequalityCheck,
    /// `f*(x(2λ; θ*)) ≤ f*(x(3λ; θ)) ≤ f*(x(4λ; θ*))`.
    pub bracket: InequalityCheck,
}

impl SandwichReport {
    pub fn holds(&self) -> bool {
        self.comparison.holds() && self.bracket.holds()
    }
}

/// f* with slack `tol` on the true constraints.
fn fstar_tol(problem: &ProblemSpec, x: &DVector<f64>, theta_star: &DVector<f64>, tol: f64) -> Result<f64> {
    for k in 0..problem.num_constraints() {
        if problem.eval_constraint(k, x, theta_star)? < -tol {
            return Ok(f64::INFINITY);
        }
    }
    Ok(problem.objective_value(x))
}

/// Checks the subspace inequality at scale λ and the three-point bracket at `μ = λ`, `κ = 3`.
#[allow(clippy::too_many_arguments)]
pub fn check_sandwich(
    problem: &ProblemSpec,
    theta_star: &DVector<f64>,
    sigma: &DMatrix<f64>,
    theta: &DVector<f64>,
    lambda: f64,
    subspace: &Subspace,
    cfg: &SolverConfig,
    tol: f64,
) -> Result<SandwichReport> {
    cholesky_psd(sigma)?;
    let eps = theta - theta_star;
    let member = in_s(problem, subspace, sigma, lambda, &eps, cfg)?;
    let solve = |th: &DVector<f64>, scale: f64| solve_robust(problem, th, sigma, scale, cfg).map(|s| s.x);
    let inside = |x: &DVector<f64>| subspace.contains(x, tol);
    let fstar = |x: &DVector<f64>| fstar_tol(problem, x, theta_star, tol);

    let x_l = solve(theta, lambda)?;
    let x_2l_star = solve(theta_star, 2.0 * lambda)?;
    let mut report = Vec::new();
    if !member {
        report.push("estimation error is outside S".to_string());
    }
    let contained = inside(&x_l)? && inside(&x_2l_star)?;
    if !contained {
        report.push("a solution leaves the subspace".to_string());
    }
    let (a, b) = (fstar(&x_l)?, fstar(&x_2l_star)?);
    let hyp = member && contained;
    let ok = a <= b + tol;
    if hyp && !ok {
        report.push(format!("f*(x(λ; θ)) = {a} exceeds f*(x(2λ; θ*)) = {b}"));
    }
    let comparison = InequalityCheck {
        hypotheses: hyp,
        conclusion: hyp.then_some(ok),
        values: vec![a, b],
        report,
    };

    let x_lo = solve(theta_star, 2.0 * lambda)?;
    let x_mid = solve(theta, 3.0 * lambda)?;
    let x_hi = solve(theta_star, 4.0 * lambda)?;
    let mut report = Vec::new();
    let contained = inside(&x_lo)? && inside(&x_mid)? && inside(&x_hi)?;
    if !member {
        report.push("estimation error is outside S".to_string());
    }
    if !contained {
        report.push("a solution leaves the subspace".to_string());
    }
    let (lo, mid, hi) = (fstar(&x_lo)?, fstar(&x_mid)?, fstar(&x_hi)?);
    let hyp = member && contained;
    let ok = lo <= mid + tol && mid <= hi + tol;
    if hyp && !ok {
        report.push(format!("bracket {lo} <= {mid} <= {hi} fails"));
    }
    let bracket = InequalityCheck {
        hypotheses: hyp,
        conclusion: hyp.then_some(ok),
        values: vec![lo, mid, hi],
        report,
    };
    Ok(SandwichReport { comparison, bracket })
}
