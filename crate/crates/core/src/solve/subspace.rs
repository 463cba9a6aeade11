use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ProblemSpec, SensitivityMap};
use crate::numerics::{cholesky_psd, Polyhedron};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NormMode {
    ExactL2,
    /// `u_k(y) = Σ_j σ_j |v_{k,j}(y)|`, linear on the nonnegative orthant.
    LinearSurrogate { kappa: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Margin {
    pub mu: f64,
    pub theta_ref: DVector<f64>,
    pub sigma_ref: DMatrix<f64>,
}

/// Search domain `{y ∈ 𝒳 : f(y) ≤ w, g_k(y, θ_ref) ≥ −μ·norm_k(y)}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subspace {
    pub base: Polyhedron,
    pub objective: DVector<f64>,
    pub maps: Vec<SensitivityMap>,
    pub value_cap: Option<f64>,
    pub margin: Option<Margin>,
    pub norm_mode: NormMode,
}

impl Subspace {
    /// The whole decision domain.
    pub fn full(problem: &ProblemSpec) -> Subspace {
        Subspace {
            base: problem.domain.clone(),
            objective: problem.objective.clone(),
            maps: problem.constraints.clone(),
            value_cap: None,
            margin: None,
            norm_mode: NormMode::ExactL2,
        }
    }

    /// Replaces the base polyhedron, e.g. by a sub-polyhedron of the domain.
    pub fn with_base(problem: &ProblemSpec, base: Polyhedron) -> Subspace {
        Subspace {
            base,
            ..Subspace::full(problem)
        }
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    fn effective_cap(&self) -> Option<f64> {
        self.value_cap.filter(|w| w.is_finite())
    }

    fn effective_margin(&self) -> Option<&Margin> {
        self.margin.as_ref().filter(|m| m.mu.is_finite())
    }

    pub fn is_polyhedral(&self) -> bool {
        self.effective_margin().is_none() || matches!(self.norm_mode, NormMode::LinearSurrogate { .. })
    }

    /// Inequality description; fails for a margin measured in the exact norm.
    pub fn polyhedron(&self) -> Result<Polyhedron> {
        let mut poly = self.base.clone();
        if let Some(w) = self.effective_cap() {
            poly = poly.with_row(&self.objective, w);
        }
        if let Some(margin) = self.effective_margin() {
            if !matches!(self.norm_mode, NormMode::LinearSurrogate { .. }) {
                return Err(Error::NonPolyhedral);
            }
            for map in &self.maps {
                let (a, b) = surrogate_row(&self.base, map, margin)?;
                poly = poly.with_row(&a, b);
            }
        }
        Ok(poly)
    }

    /// Pointwise membership, available in every norm mode.
    pub fn contains(&self, y: &DVector<f64>, tol: f64) -> Result<bool> {
        if !self.base.contains(y, tol) {
            return Ok(false);
        }
        if let Some(w) = self.effective_cap() {
            if self.objective.dot(y) > w + tol {
                return Ok(false);
            }
        }
        if let Some(margin) = self.effective_margin() {
            let factor = cholesky_psd(&margin.sigma_ref)?;
            for map in &self.maps {
                let v = map.apply(y);
                let g = margin.theta_ref.dot(&v);
                let norm = match self.norm_mode {
                    NormMode::ExactL2 => factor.sigma_norm(&v),
                    NormMode::LinearSurrogate { .. } => surrogate_norm(&margin.sigma_ref, &v),
                };
                if g < -margin.mu * norm - tol {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }
}

/// `Σ_j √Σ_jj |v_j|`, an upper bound on `‖Σ^{1/2} v‖` by the triangle inequality.
pub fn surrogate_norm(sigma: &DMatrix<f64>, v: &DVector<f64>) -> f64 {
    (0..v.len()).map(|j| sigma[(j, j)].max(0.0).sqrt() * v[j].abs()).sum()
}

/// Row `a·y ≤ b` equivalent to `g(y, θ_ref) ≥ −μ u(y)` on the base domain.
fn surrogate_row(base: &Polyhedron, map: &SensitivityMap, margin: &Margin) -> Result<(DVector<f64>, f64)> {
    let m = map.a.ncols();
    let mut a = -map.a.tr_mul(&margin.theta_ref);
    let mut b = margin.theta_ref.dot(&map.c);
    for j in 0..map.a.nrows() {
        let sigma_j = margin.sigma_ref[(j, j)].max(0.0).sqrt();
        if sigma_j == 0.0 {
            continue;
        }
        let row = map.a.row(j);
        let mut sign = 0.0;
        let mut consistent = true;
        let mut note = |v: f64| {
            if v != 0.0 {
                let s = v.signum();
                if sign == 0.0 {
                    sign = s;
                } else if sign != s {
                    consistent = false;
                }
            }
        };
        note(map.c[j]);
        for i in 0..m {
            if row[i] != 0.0 && !base.nonneg[i] {
                return Err(Error::SurrogateUnavailable(format!(
                    "sensitivity row {j} depends on free variable {i}"
                )));
            }
            note(row[i]);
        }
        if !consistent {
            return Err(Error::SurrogateUnavailable(format!(
                "sensitivity row {j} changes sign on the nonnegative orthant"
            )));
        }
        // −μ σ_j |v_j| = −μ σ_j s (A_j y + c_j)
        let coef = margin.mu * sigma_j * sign;
        for i in 0..m {
            a[i] -= coef * row[i];
        }
        b += coef * map.c[j];
    }
    Ok((a, b))
}
