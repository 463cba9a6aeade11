//! Sample moments and the finite-sample accuracy constants.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ProblemSpec;
use crate::numerics::chi_quantile;
use crate::numerics::linalg::pinv_sqrt;

/// Berry–Esseen constant `c_d = 400 d^{1/4}` at `d = 1`.
pub const C1: f64 = 400.0;

const PLUG_IN_INFLATION: f64 = 1.2;
const SANDWICH_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalEstimate {
    pub theta_hat: DVector<f64>,
    pub sigma_hat: DMatrix<f64>,
    pub n: usize,
    pub tau: f64,
    pub tau_prime: f64,
}

impl EmpiricalEstimate {
    pub fn dim(&self) -> usize {
        self.theta_hat.len()
    }
}

/// Mean, 1/n scatter, and moment bounds. Dummy coordinates get mean 1 and zero variance.
pub fn empirical_moments(
    samples: &[DVector<f64>],
    bounds: Option<(f64, f64)>,
    dummy_coords: &[usize],
) -> Result<EmpiricalEstimate> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 samples, got {n}")));
    }
    let d = samples[0].len();
    for s in samples {
        if s.len() != d {
            return Err(Error::DimensionMismatch {
                what: "sample",
                expected: d,
                actual: s.len(),
            });
        }
    }
    let nf = n as f64;
    let mut mean = DVector::zeros(d);
    for s in samples {
        mean += s;
    }
    mean /= nf;
    for &j in dummy_coords {
        mean[j] = 1.0;
    }
    let mut scatter = DMatrix::zeros(d, d);
    for s in samples {
        let mut dev = s - &mean;
        for &j in dummy_coords {
            dev[j] = 0.0;
        }
        scatter.ger(1.0, &dev, &dev, 1.0);
    }
    scatter /= nf;
    // exact symmetry for the factorization
    let sigma_hat = (&scatter + scatter.transpose()) * 0.5;

    let (tau, tau_prime) = match bounds {
        Some((t, tp)) => {
            if !(t >= 0.0 && tp >= 0.0) {
                return Err(Error::InvalidArgument("moment bounds must be >= 0".into()));
            }
            (t, tp)
        }
        None => plug_in_bounds(samples, &mean, &sigma_hat, dummy_coords),
    };
    Ok(EmpiricalEstimate {
        theta_hat: mean,
        sigma_hat,
        n,
        tau,
        tau_prime,
    })
}

fn plug_in_bounds(
    samples: &[DVector<f64>],
    mean: &DVector<f64>,
    sigma_hat: &DMatrix<f64>,
    dummy_coords: &[usize],
) -> (f64, f64) {
    let w = pinv_sqrt(sigma_hat);
    let d = mean.len();
    let nf = samples.len() as f64;
    let mut third = 0.0;
    let mut sixth = vec![0.0; d];
    for s in samples {
        let mut dev = s - mean;
        for &j in dummy_coords {
            dev[j] = 0.0;
        }
        let z = &w * dev;
        third += z.norm().powi(3);
        for j in 0..d {
            sixth[j] += z[j].powi(6);
        }
    }
    let tau = PLUG_IN_INFLATION * third / nf;
    let tau_prime = PLUG_IN_INFLATION * sixth.iter().fold(0.0_f64, |a, &b| a.max(b)) / nf;
    (tau, tau_prime)
}

/// `η_{d,n}(δ') = (τ'^{1/3} d / √n) · χ₁⁻¹(1 − δ'/d² + c₁τ'/√n)`; `+∞` when the bound is vacuous.
pub fn eta(d: usize, n: usize, delta_prime: f64, tau_prime: f64) -> f64 {
    if tau_prime == 0.0 {
        return 0.0;
    }
    let df = d as f64;
    let sn = (n as f64).sqrt();
    let arg = 1.0 - delta_prime / (df * df) + C1 * tau_prime / sn;
    if !(0.0..1.0).contains(&arg) {
        return f64::INFINITY;
    }
    match chi_quantile(1, arg) {
        Ok(q) => tau_prime.cbrt() * df / sn * q,
        Err(_) => f64::INFINITY,
    }
}

/// Scalar factors `(1 − η, 1 + η)` bracketing `Σ̂` against `Σ*`, lower end floored at 1e-6.
pub fn covariance_sandwich(eta_val: f64) -> (f64, f64) {
    ((1.0 - eta_val).max(SANDWICH_FLOOR), 1.0 + eta_val)
}

/// Reads observations of the non-dummy coordinates from CSV and inserts dummy ones.
pub fn load_samples(path: &Path, problem: &ProblemSpec) -> Result<Vec<DVector<f64>>> {
    let text = std::fs::read_to_string(path)?;
    parse_samples(&text, problem)
}

pub fn parse_samples(text: &str, problem: &ProblemSpec) -> Result<Vec<DVector<f64>>> {
    let free: Vec<usize> = (0..problem.d).filter(|j| !problem.is_dummy(*j)).collect();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut out = Vec::new();
    for (idx, rec) in reader.records().enumerate() {
        let line = idx + 1;
        let rec = rec.map_err(|e| Error::Parse(format!("line {line}: {e}")))?;
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        let values = match parsed {
            Ok(v) => v,
            // a non-numeric first row is a header
            Err(_) if idx == 0 => continue,
            Err(e) => return Err(Error::Parse(format!("line {line}: {e}"))),
        };
        if values.len() != free.len() {
            return Err(Error::Parse(format!(
                "line {line}: expected {} columns, found {}",
                free.len(),
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Parse(format!("line {line}: non-finite value {v}")));
        }
        let mut theta = DVector::from_element(problem.d, 1.0);
        for (&j, v) in free.iter().zip(values) {
            theta[j] = v;
        }
        out.push(theta);
    }
    if out.is_empty() {
        return Err(Error::Empty("sample file"));
    }
    Ok(out)
}
