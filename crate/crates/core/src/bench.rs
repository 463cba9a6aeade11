//! Synthetic portfolio experiments: trials, VaR estimation and sweep aggregation.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibrate::{baseline_scales, calibrate_from_estimate, CalibrationConfig, Mode};
use crate::error::{Error, Result};
use crate::estimate::{empirical_moments, EmpiricalEstimate};
use crate::model::{ProblemSpec, SensitivityMap, TrueModel};
use crate::numerics::{cholesky_psd, empirical_quantile, sample_mvn_batch, Polyhedron, RngStream};
use crate::solve::solve_robust;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Budget {
    /// `Σ x_i ≤ 1`, the slack simplex.
    #[default]
    AtMost,
    /// `Σ x_i = 1`.
    Exact,
}

/// `min x₀` s.t. `θ₀x₀ − Σ θ_i x_i ≥ 0` over the budget simplex, with `θ₀ = 1` a dummy.
pub fn generate_portfolio(d: usize) -> (ProblemSpec, TrueModel) {
    generate_portfolio_with_budget(d, Budget::AtMost)
}

pub fn generate_portfolio_with_budget(d: usize, budget: Budget) -> (ProblemSpec, TrueModel) {
    assert!(d >= 1, "portfolio needs at least one item");
    let mut diag = vec![-1.0; d + 1];
    diag[0] = 1.0;
    let mut row = vec![1.0; d + 1];
    row[0] = 0.0;
    let mut domain = Polyhedron::new(
        DMatrix::from_row_slice(1, d + 1, &row),
        DVector::from_element(1, 1.0),
        (0..=d).map(|i| i > 0).collect(),
    )
    .expect("consistent shapes");
    if budget == Budget::Exact {
        domain = domain.with_row(&-DVector::from_vec(row), -1.0);
    }
    let mut objective = DVector::zeros(d + 1);
    objective[0] = 1.0;
    let problem = ProblemSpec {
        m: d + 1,
        d: d + 1,
        objective,
        constraints: vec![SensitivityMap {
            a: DMatrix::from_diagonal(&DVector::from_vec(diag)),
            c: DVector::zeros(d + 1),
        }],
        domain,
        dummy_coords: vec![0],
        epigraph_var: Some(0),
    };
    let step = if d == 20 { 0.1 } else { 2.0 / d as f64 };
    let theta_star = DVector::from_fn(d + 1, |i, _| if i == 0 { 1.0 } else { -1.0 + step * (i - 1) as f64 });
    let model = TrueModel {
        theta_star,
        sigma_star: DMatrix::zeros(d + 1, d + 1),
    };
    (problem, model)
}

/// `diag(0, σ₁², …, σ_d²)` with `σ_i ~ U[0, 10]`.
pub fn sample_covariance_scenario(d: usize, rng: &RngStream) -> DMatrix<f64> {
    let mut g = rng.generator();
    let mut s = DMatrix::zeros(d + 1, d + 1);
    for i in 1..=d {
        let sigma: f64 = g.random_range(0.0..10.0);
        s[(i, i)] = sigma * sigma;
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleMethod {
    Proposed,
    Lower,
    Upper,
}

impl ScaleMethod {
    pub fn name(self) -> &'static str {
        match self {
            ScaleMethod::Proposed => "proposed",
            ScaleMethod::Lower => "lower",
            ScaleMethod::Upper => "upper",
        }
    }
}

impl std::str::FromStr for ScaleMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "proposed" => Ok(ScaleMethod::Proposed),
            "lower" => Ok(ScaleMethod::Lower),
            "upper" => Ok(ScaleMethod::Upper),
            _ => Err(Error::InvalidArgument(format!("unknown method {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub d: usize,
    pub delta: f64,
    pub n_grid: Vec<usize>,
    pub trials_per_cov: usize,
    pub cov_draws: usize,
    pub methods: Vec<ScaleMethod>,
    pub seed: u64,
    pub cap: f64,
    #[serde(default = "practical")]
    pub mode: Mode,
    #[serde(default)]
    pub budget: Budget,
    #[serde(default)]
    pub calibration: CalibrationConfig,
}

fn practical() -> Mode {
    Mode::Practical
}

impl SweepConfig {
    /// 10 covariance draws × 10 trials at `d = 20`, `δ = 0.3`.
    pub fn desk_scale(seed: u64) -> Self {
        SweepConfig {
            d: 20,
            delta: 0.3,
            n_grid: vec![20, 60, 120, 1000],
            trials_per_cov: 10,
            cov_draws: 10,
            methods: vec![ScaleMethod::Proposed, ScaleMethod::Lower, ScaleMethod::Upper],
            seed,
            cap: 1.0,
            mode: Mode::Practical,
            budget: Budget::AtMost,
            calibration: CalibrationConfig::default(),
        }
    }

    /// 30 covariance draws × 20 trials.
    pub fn full_scale(mut self) -> Self {
        self.cov_draws = 30;
        self.trials_per_cov = 20;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::InvalidArgument("d must be >= 1".into()));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidArgument(format!("delta must be in (0, 1), got {}", self.delta)));
        }
        if self.n_grid.is_empty() || self.n_grid.iter().any(|&n| n < 2) {
            return Err(Error::InvalidArgument("n_grid must be non-empty with every n >= 2".into()));
        }
        if self.trials_per_cov == 0 || self.cov_draws == 0 {
            return Err(Error::InvalidArgument("trial and covariance counts must be >= 1".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidArgument("at least one method is required".into()));
        }
        if self.cap.is_nan() {
            return Err(Error::InvalidArgument("cap must not be NaN".into()));
        }
        self.calibration.solver.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialConfig {
    pub delta: f64,
    pub mode: Mode,
    pub cap: f64,
    pub calibration: CalibrationConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub n: usize,
    pub method: ScaleMethod,
    pub cov_draw: usize,
    pub trial: usize,
    /// NaN when the scale could not be computed.
    pub lambda_used: f64,
    pub sqrt_n_lambda: f64,
    pub objective_fstar: f64,
    pub violated: bool,
    pub seed_path: Vec<u64>,
    pub error: Option<String>,
}

fn draw_samples(model: &TrueModel, n: usize, rng: &RngStream) -> Result<Vec<DVector<f64>>> {
    let factor = cholesky_psd(&model.sigma_star)?;
    Ok(sample_mvn_batch(&factor, rng, n)
        .into_iter()
        .map(|z| z + &model.theta_star)
        .collect())
}

fn scale_for(
    problem: &ProblemSpec,
    est: &EmpiricalEstimate,
    method: ScaleMethod,
    cfg: &TrialConfig,
    rng: &RngStream,
) -> Result<f64> {
    let d = problem.free_dim().max(1);
    match method {
        ScaleMethod::Lower => Ok(baseline_scales(est.n, d, cfg.delta)?.0),
        ScaleMethod::Upper => Ok(baseline_scales(est.n, d, cfg.delta)?.1),
        ScaleMethod::Proposed => {
            calibrate_from_estimate(problem, est, cfg.delta, &cfg.calibration, cfg.mode, rng).map(|r| r.lambda_hat)
        }
    }
}

fn score(
    problem: &ProblemSpec,
    model: &TrueModel,
    est: &EmpiricalEstimate,
    lambda: Result<f64>,
    cfg: &TrialConfig,
) -> (f64, f64, bool, Option<String>) {
    let lambda_ok = match lambda {
        Ok(l) => l,
        Err(e) => return (f64::NAN, cfg.cap, true, Some(e.to_string())),
    };
    let outcome = solve_robust(problem, &est.theta_hat, &est.sigma_hat, lambda_ok, &cfg.calibration.solver)
        .and_then(|s| problem.true_objective(&s.x, model, None));
    match outcome {
        Ok(f) if f.is_finite() => (lambda_ok, f, false, None),
        Ok(_) => (lambda_ok, cfg.cap, true, None),
        Err(e) => (lambda_ok, cfg.cap, true, Some(e.to_string())),
    }
}

/// All methods on one shared sample set.
fn run_methods(
    problem: &ProblemSpec,
    model: &TrueModel,
    n: usize,
    methods: &[ScaleMethod],
    cfg: &TrialConfig,
    rng: &RngStream,
) -> Vec<(ScaleMethod, f64, f64, bool, Option<String>)> {
    let est = draw_samples(model, n, &rng.fork(0))
        .and_then(|s| empirical_moments(&s, Some((0.0, 0.0)), &problem.dummy_coords));
    methods
        .iter()
        .map(|&m| {
            let (lambda, f, violated, err) = match &est {
                Ok(est) => {
                    let lambda = scale_for(problem, est, m, cfg, &rng.fork(1));
                    score(problem, model, est, lambda, cfg)
                }
                Err(e) => (f64::NAN, cfg.cap, true, Some(e.to_string())),
            };
            (m, lambda, f, violated, err)
        })
        .collect()
}

/// Draws `n` samples from `N(θ*, Σ*)`, sets λ by `method`, and scores `f*` with the cap.
pub fn run_trial(
    problem: &ProblemSpec,
    model: &TrueModel,
    n: usize,
    method: ScaleMethod,
    cfg: &TrialConfig,
    rng: &RngStream,
) -> TrialRecord {
    let (method, lambda, f, violated, error) = run_methods(problem, model, n, &[method], cfg, rng).remove(0);
    TrialRecord {
        n,
        method,
        cov_draw: 0,
        trial: 0,
        lambda_used: lambda,
        sqrt_n_lambda: lambda * (n as f64).sqrt(),
        objective_fstar: f,
        violated,
        seed_path: rng.path.clone(),
        error,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub n: usize,
    pub method: ScaleMethod,
    /// Mean over covariance draws of the per-draw VaR.
    pub var_delta: f64,
    pub violation_rate: f64,
    pub mean_sqrt_n_lambda: f64,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub config: SweepConfig,
    pub cells: Vec<SweepCell>,
    pub records: Vec<TrialRecord>,
}

impl SweepReport {
    pub fn cell(&self, n: usize, method: ScaleMethod) -> Option<&SweepCell> {
        self.cells.iter().find(|c| c.n == n && c.method == method)
    }
}

pub fn run_sweep(config: &SweepConfig) -> Result<SweepReport> {
    config.validate()?;
    let (problem, template) = generate_portfolio_with_budget(config.d, config.budget);
    let root = RngStream::new(config.seed);
    let trial_cfg = TrialConfig {
        delta: config.delta,
        mode: config.mode,
        cap: config.cap,
        calibration: config.calibration,
    };
    let models: Vec<TrueModel> = (0..config.cov_draws)
        .map(|c| TrueModel {
            theta_star: template.theta_star.clone(),
            sigma_star: sample_covariance_scenario(config.d, &root.fork_path(&[0, c as u64])),
        })
        .collect();
    let mut methods = config.methods.clone();
    methods.sort();
    methods.dedup();

    let tasks: Vec<(usize, usize, usize)> = (0..config.cov_draws)
        .flat_map(|c| config.n_grid.iter().flat_map(move |&n| (0..config.trials_per_cov).map(move |t| (c, n, t))))
        .collect();
    let mut records: Vec<TrialRecord> = tasks
        .par_iter()
        .flat_map_iter(|&(c, n, t)| {
            let rng = root.fork_path(&[1, c as u64, n as u64, t as u64]);
            run_methods(&problem, &models[c], n, &methods, &trial_cfg, &rng)
                .into_iter()
                .map(move |(method, lambda, f, violated, error)| {
                    if let Some(e) = &error {
                        log::warn!("trial cov={c} n={n} t={t} {}: {e}", method.name());
                    }
                    TrialRecord {
                        n,
                        method,
                        cov_draw: c,
                        trial: t,
                        lambda_used: lambda,
                        sqrt_n_lambda: lambda * (n as f64).sqrt(),
                        objective_fstar: f,
                        violated,
                        seed_path: rng.path.clone(),
                        error,
                    }
                })
                .collect::<Vec<_>>()
        })
        .collect();
    records.sort_by_key(|r| (r.n, r.method, r.cov_draw, r.trial));

    let mut ns = config.n_grid.clone();
    ns.sort_unstable();
    ns.dedup();
    let mut cells = Vec::new();
    for &n in &ns {
        for &method in &methods {
            let group: Vec<&TrialRecord> = records.iter().filter(|r| r.n == n && r.method == method).collect();
            let mut var_sum = 0.0;
            for c in 0..config.cov_draws {
                let vals: Vec<f64> = group
                    .iter()
                    .filter(|r| r.cov_draw == c)
                    .map(|r| r.objective_fstar)
                    .collect();
                var_sum += empirical_quantile(&vals, config.delta)?;
            }
            let lambdas: Vec<f64> = group.iter().map(|r| r.sqrt_n_lambda).filter(|v| v.is_finite()).collect();
            cells.push(SweepCell {
                n,
                method,
                var_delta: var_sum / config.cov_draws as f64,
                violation_rate: group.iter().filter(|r| r.violated).count() as f64 / group.len() as f64,
                mean_sqrt_n_lambda: if lambdas.is_empty() {
                    f64::NAN
                } else {
                    lambdas.iter().sum::<f64>() / lambdas.len() as f64
                },
                failures: group.iter().filter(|r| r.error.is_some()).count(),
            });
        }
    }
    Ok(SweepReport {
        config: config.clone(),
        cells,
        records,
    })
}

/// `n,method,cov_draw,trial,lambda,sqrt_n_lambda,fstar,violated`
pub fn write_raw_csv<W: Write>(report: &SweepReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["n", "method", "cov_draw", "trial", "lambda", "sqrt_n_lambda", "fstar", "violated"])
        .map_err(csv_err)?;
    for r in &report.records {
        w.write_record([
            r.n.to_string(),
            r.method.name().to_string(),
            r.cov_draw.to_string(),
            r.trial.to_string(),
            r.lambda_used.to_string(),
            r.sqrt_n_lambda.to_string(),
            r.objective_fstar.to_string(),
            r.violated.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Io(e.to_string()))
}

/// `n,method,var_delta,violation_rate,mean_sqrt_n_lambda`
pub fn write_summary_csv<W: Write>(report: &SweepReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["n", "method", "var_delta", "violation_rate", "mean_sqrt_n_lambda"])
        .map_err(csv_err)?;
    for c in &report.cells {
        w.write_record([
            c.n.to_string(),
            c.method.name().to_string(),
            c.var_delta.to_string(),
            c.violation_rate.to_string(),
            c.mean_sqrt_n_lambda.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Io(e.to_string()))
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn portfolio_shape() {
        let (p, m) = generate_portfolio(20);
        p.validate().unwrap();
        assert_eq!((p.m, p.d, p.num_constraints()), (21, 21, 1));
        assert!((m.theta_star[1] + 1.0).abs() < 1e-15);
        assert!((m.theta_star[20] - 0.9).abs() < 1e-12);
        let (p, m) = generate_portfolio(1);
        p.validate().unwrap();
        assert_eq!(m.theta_star.as_slice(), &[1.0, -1.0]);
        let (_, m) = generate_portfolio(4);
        assert_eq!(m.theta_star.as_slice(), &[1.0, -1.0, -0.5, 0.0, 0.5]);
    }

    #[test]
    fn covariance_draws() {
        let root = RngStream::new(3);
        let mut mean = 0.0;
        let draws = 10_000;
        for i in 0..draws {
            let s = sample_covariance_scenario(3, &root.fork(i));
            assert_eq!(s[(0, 0)], 0.0);
            for j in 1..=3 {
                assert!((0.0..=100.0).contains(&s[(j, j)]));
                mean += s[(j, j)];
            }
        }
        mean /= (3 * draws) as f64;
        assert!((mean - 100.0 / 3.0).abs() < 0.05 * 100.0 / 3.0, "{mean}");
    }

    #[test]
    fn noiseless_trial() {
        let (p, m) = generate_portfolio(20);
        let cfg = TrialConfig {
            delta: 0.3,
            mode: Mode::Practical,
            cap: 1.0,
            calibration: CalibrationConfig::default(),
        };
        let rec = run_trial(&p, &m, 10, ScaleMethod::Upper, &cfg, &RngStream::new(1));
        assert!((rec.objective_fstar + 1.0).abs() < 1e-9);
        assert!(!rec.violated);
        assert_eq!(rec.lambda_used, baseline_scales(10, 20, 0.3).unwrap().1);
    }

    #[test]
    fn single_cell_sweep() {
        let cfg = SweepConfig {
            d: 3,
            n_grid: vec![10],
            trials_per_cov: 1,
            cov_draws: 1,
            methods: vec![ScaleMethod::Upper],
            ..SweepConfig::desk_scale(5)
        };
        let r = run_sweep(&cfg).unwrap();
        assert_eq!(r.cells.len(), 1);
        assert_eq!(r.records.len(), 1);
        assert_eq!(r.cells[0].var_delta, r.records[0].objective_fstar);
    }
}
