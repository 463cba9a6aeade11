//! Parameterized problem family with constraints bilinear in `(x, θ)`.
//!
//! Each constraint is `g_k(x, θ) = θᵀ v_k(x) ≥ 0` with an affine sensitivity map
//! `v_k(x) = A_k x + c_k`. Constant terms are carried by dummy parameter
//! coordinates that are fixed at 1 and never vary.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::numerics::{cholesky_psd, solve_lp, CholFactor, Polyhedron};

/// Absolute slack for true-constraint checks.
pub const FEASIBILITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityMap {
    pub a: DMatrix<f64>,
    pub c: DVector<f64>,
}

impl SensitivityMap {
    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.a * x + &self.c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub m: usize,
    pub d: usize,
    pub objective: DVector<f64>,
    pub constraints: Vec<SensitivityMap>,
    pub domain: Polyhedron,
    pub dummy_coords: Vec<usize>,
    pub epigraph_var: Option<usize>,
}

/// Σ and the robustness scale λ defining `λ U_Σ`.
#[derive(Debug, Clone, PartialEq)]
pub struct EllipsoidalUncertainty {
    pub sigma: DMatrix<f64>,
    pub scale: f64,
    factor: CholFactor,
}

impl EllipsoidalUncertainty {
    pub fn new(sigma: DMatrix<f64>, scale: f64) -> Result<Self> {
        if !(scale >= 0.0) {
            return Err(Error::InvalidArgument(format!("scale must be >= 0, got {scale}")));
        }
        let factor = cholesky_psd(&sigma)?;
        Ok(EllipsoidalUncertainty {
            sigma,
            scale,
            factor,
        })
    }

    pub fn factor(&self) -> &CholFactor {
        &self.factor
    }

    /// Whether `u ∈ scale · U_Σ`, tested through the factor without inverting Σ.
    pub fn contains(&self, u: &DVector<f64>, tol: f64) -> bool {
        // least squares on the active columns of L; u must lie in their span
        let lt = self.factor.lt_active();
        let basis = lt.transpose();
        let gram = lt * &basis;
        let Some(chol) = gram.cholesky() else {
            return u.amax() <= tol;
        };
        let z = chol.solve(&(lt * u));
        let resid = (&basis * &z - u).amax();
        resid <= tol.max(1e-9 * u.amax()) && z.norm() <= self.scale + tol
    }
}

/// True parameter and covariance of the sampling distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueModel {
    pub theta_star: DVector<f64>,
    pub sigma_star: DMatrix<f64>,
}

impl TrueModel {
    pub fn validate(&self, problem: &ProblemSpec) -> Result<()> {
        check_dim("theta_star", problem.d, self.theta_star.len())?;
        check_dim("sigma_star rows", problem.d, self.sigma_star.nrows())?;
        check_dim("sigma_star cols", problem.d, self.sigma_star.ncols())?;
        for &j in &problem.dummy_coords {
            if self.theta_star[j] != 1.0 {
                return Err(Error::InvalidProblem(format!(
                    "dummy coordinate {j} of theta_star must equal 1"
                )));
            }
            if self.sigma_star.row(j).amax() != 0.0 || self.sigma_star.column(j).amax() != 0.0 {
                return Err(Error::InvalidProblem(format!(
                    "dummy coordinate {j} must have zero covariance"
                )));
            }
        }
        cholesky_psd(&self.sigma_star)?;
        Ok(())
    }
}

impl ProblemSpec {
    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn is_dummy(&self, j: usize) -> bool {
        self.dummy_coords.contains(&j)
    }

    /// Number of parameter coordinates that can vary.
    pub fn free_dim(&self) -> usize {
        self.d - self.dummy_coords.len()
    }

    fn map(&self, k: usize) -> Result<&SensitivityMap> {
        self.constraints.get(k).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "constraint index {k} out of range (K = {})",
                self.constraints.len()
            ))
        })
    }

    pub fn sensitivity(&self, k: usize, x: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim("decision vector", self.m, x.len())?;
        Ok(self.map(k)?.apply(x))
    }

    /// `g_k(x, θ) = θᵀ (A_k x + c_k)`.
    pub fn eval_constraint(&self, k: usize, x: &DVector<f64>, theta: &DVector<f64>) -> Result<f64> {
        check_dim("parameter vector", self.d, theta.len())?;
        Ok(theta.dot(&self.sensitivity(k, x)?))
    }

    /// `r_k(x; Σ) = max_{u ∈ U_Σ} g_k(x, u) = ‖Σ^{1/2} v_k(x)‖`.
    pub fn radius(&self, k: usize, x: &DVector<f64>, factor: &CholFactor) -> Result<f64> {
        check_dim("covariance", self.d, factor.dim())?;
        Ok(factor.sigma_norm(&self.sensitivity(k, x)?))
    }

    pub fn radius_with_sigma(&self, k: usize, x: &DVector<f64>, sigma: &DMatrix<f64>) -> Result<f64> {
        self.radius(k, x, &cholesky_psd(sigma)?)
    }

    pub fn objective_value(&self, x: &DVector<f64>) -> f64 {
        self.objective.dot(x)
    }

    /// `f*(x)`: the objective when every true constraint holds, else `+∞` (or `cap`).
    pub fn true_objective(&self, x: &DVector<f64>, model: &TrueModel, cap: Option<f64>) -> Result<f64> {
        check_dim("decision vector", self.m, x.len())?;
        for k in 0..self.num_constraints() {
            if self.eval_constraint(k, x, &model.theta_star)? < -FEASIBILITY_TOL {
                return Ok(cap.unwrap_or(f64::INFINITY));
            }
        }
        Ok(self.objective_value(x))
    }

    /// Domain with the epigraph variable removed.
    pub fn reduced_domain(&self) -> Result<Polyhedron> {
        match self.epigraph_var {
            Some(e) => self.domain.without_var(e),
            None => Ok(self.domain.clone()),
        }
    }

    /// Checks every structural invariant and reports the first violation.
    pub fn validate(&self) -> Result<()> {
        if self.constraints.is_empty() {
            return Err(Error::InvalidProblem("at least one constraint is required".into()));
        }
        check_dim("objective", self.m, self.objective.len())?;
        for (k, map) in self.constraints.iter().enumerate() {
            if map.a.nrows() != self.d || map.a.ncols() != self.m {
                return Err(Error::InvalidProblem(format!(
                    "constraint {k}: A must be {}x{}, got {}x{}",
                    self.d,
                    self.m,
                    map.a.nrows(),
                    map.a.ncols()
                )));
            }
            check_dim("constraint offset", self.d, map.c.len())?;
        }
        check_dim("domain columns", self.m, self.domain.dim())?;
        for &j in &self.dummy_coords {
            if j >= self.d {
                return Err(Error::InvalidProblem(format!("dummy coordinate {j} out of range")));
            }
        }
        let mut seen = self.dummy_coords.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.dummy_coords.len() {
            return Err(Error::InvalidProblem("duplicate dummy coordinates".into()));
        }
        if let Some(e) = self.epigraph_var {
            self.validate_epigraph(e)?;
        }
        self.check_bounded()
    }

    fn validate_epigraph(&self, e: usize) -> Result<()> {
        if e >= self.m {
            return Err(Error::InvalidProblem(format!("epigraph variable {e} out of range")));
        }
        let mut unit = DVector::zeros(self.m);
        unit[e] = 1.0;
        if self.objective != unit {
            return Err(Error::InvalidProblem(
                "epigraph problems must minimize the epigraph variable alone".into(),
            ));
        }
        if self.num_constraints() != 1 {
            return Err(Error::InvalidProblem(
                "epigraph elimination supports exactly one uncertain constraint".into(),
            ));
        }
        if self.domain.g.column(e).amax() != 0.0 {
            return Err(Error::InvalidProblem(
                "epigraph variable may not appear in domain rows".into(),
            ));
        }
        let col = self.constraints[0].a.column(e);
        let mut alpha = 0.0;
        for (j, &v) in col.iter().enumerate() {
            if v != 0.0 && !self.is_dummy(j) {
                return Err(Error::InvalidProblem(
                    "epigraph variable must load only on dummy parameter coordinates".into(),
                ));
            }
            alpha += v;
        }
        if alpha <= 0.0 {
            return Err(Error::InvalidProblem(
                "epigraph variable must enter its constraint with positive weight".into(),
            ));
        }
        Ok(())
    }

    /// Coefficient of the epigraph variable in its constraint (dummy coordinates equal 1).
    pub fn epigraph_weight(&self) -> Option<f64> {
        self.epigraph_var.map(|e| {
            self.constraints[0]
                .a
                .column(e)
                .iter()
                .enumerate()
                .filter(|(j, _)| self.is_dummy(*j))
                .map(|(_, v)| v)
                .sum()
        })
    }

    fn check_bounded(&self) -> Result<()> {
        let dom = &self.domain;
        for j in 0..self.m {
            if Some(j) == self.epigraph_var {
                continue;
            }
            for sign in [1.0, -1.0] {
                let mut c = DVector::zeros(self.m);
                c[j] = sign;
                match solve_lp(&c, dom) {
                    Ok(_) => {}
                    Err(Error::Unbounded) => {
                        return Err(Error::InvalidProblem(format!(
                            "domain is unbounded in variable {j}"
                        )))
                    }
                    Err(Error::Infeasible) => {
                        return Err(Error::InvalidProblem("domain is empty".into()))
                    }
                    Err(e) => return Err(e),
                }
            }
        }
        Ok(())
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let ext = path.extension().and_then(|s| s.to_str()).unwrap_or("");
        let file: ProblemFile = match ext {
            "toml" => toml::from_str(&text).map_err(|e| Error::Parse(e.to_string()))?,
            _ => serde_json::from_str(&text).map_err(|e| Error::Parse(e.to_string()))?,
        };
        file.into_problem()
    }

    pub fn to_file(&self) -> ProblemFile {
        let rows = |m: &DMatrix<f64>| -> Vec<Vec<f64>> {
            (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
        };
        ProblemFile {
            m: self.m,
            d: self.d,
            objective: self.objective.iter().copied().collect(),
            constraints: self
                .constraints
                .iter()
                .map(|c| ConstraintFile {
                    a: rows(&c.a),
                    c: c.c.iter().copied().collect(),
                })
                .collect(),
            domain: DomainFile {
                g: rows(&self.domain.g),
                h: self.domain.h.iter().copied().collect(),
                nonneg: self.domain.nonneg.clone(),
            },
            dummy_coords: self.dummy_coords.clone(),
            epigraph_var: self.epigraph_var,
        }
    }
}

/// On-disk problem description (JSON or TOML).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub m: usize,
    pub d: usize,
    pub objective: Vec<f64>,
    pub constraints: Vec<ConstraintFile>,
    pub domain: DomainFile,
    #[serde(default)]
    pub dummy_coords: Vec<usize>,
    #[serde(default)]
    pub epigraph_var: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintFile {
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    pub c: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainFile {
    #[serde(rename = "G")]
    pub g: Vec<Vec<f64>>,
    pub h: Vec<f64>,
    pub nonneg: Vec<bool>,
}

fn matrix_from_rows(what: &str, rows: &[Vec<f64>], ncols: usize) -> Result<DMatrix<f64>> {
    for (i, r) in rows.iter().enumerate() {
        if r.len() != ncols {
            return Err(Error::InvalidProblem(format!(
                "{what} row {i} has {} entries, expected {ncols}",
                r.len()
            )));
        }
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

impl ProblemFile {
    pub fn into_problem(self) -> Result<ProblemSpec> {
        if self.objective.len() != self.m {
            return Err(Error::InvalidProblem(format!(
                "objective has {} entries, expected m = {}",
                self.objective.len(),
                self.m
            )));
        }
        let mut constraints = Vec::with_capacity(self.constraints.len());
        for (k, c) in self.constraints.iter().enumerate() {
            if c.a.len() != self.d {
                return Err(Error::InvalidProblem(format!(
                    "constraint {k}: A has {} rows, expected d = {}",
                    c.a.len(),
                    self.d
                )));
            }
            if c.c.len() != self.d {
                return Err(Error::InvalidProblem(format!(
                    "constraint {k}: c has {} entries, expected d = {}",
                    c.c.len(),
                    self.d
                )));
            }
            constraints.push(SensitivityMap {
                a: matrix_from_rows("A", &c.a, self.m)?,
                c: DVector::from_vec(c.c.clone()),
            });
        }
        if self.domain.h.len() != self.domain.g.len() {
            return Err(Error::InvalidProblem(format!(
                "domain: G has {} rows but h has {} entries",
                self.domain.g.len(),
                self.domain.h.len()
            )));
        }
        if self.domain.nonneg.len() != self.m {
            return Err(Error::InvalidProblem(format!(
                "domain: nonneg has {} flags, expected m = {}",
                self.domain.nonneg.len(),
                self.m
            )));
        }
        let domain = Polyhedron::new(
            matrix_from_rows("G", &self.domain.g, self.m)?,
            DVector::from_vec(self.domain.h),
            self.domain.nonneg,
        )?;
        let spec = ProblemSpec {
            m: self.m,
            d: self.d,
            objective: DVector::from_vec(self.objective),
            constraints,
            domain,
            dummy_coords: self.dummy_coords,
            epigraph_var: self.epigraph_var,
        };
        spec.validate()?;
        Ok(spec)
    }
}
