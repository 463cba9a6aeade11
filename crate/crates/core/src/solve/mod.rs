//! Convex subproblems: the robust counterpart and the membership objective ψ.

mod linnorm;
mod psi;
mod robust;
mod subspace;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::model::SensitivityMap;
use crate::numerics::CholFactor;

pub use linnorm::{LinNormSolution, LinearPlusNorm, StopRule};
pub use psi::{in_s, psi, Membership, PsiContext, MEMBERSHIP_TOL};
pub use robust::{solve_robust, solve_robust_factored, RobustSolution};
pub use subspace::{surrogate_norm, Margin, NormMode, Subspace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    FrankWolfe,
    ProjectedSubgradient,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub max_iters: usize,
    pub tol: f64,
    pub method: Method,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iters: 20_000,
            tol: 1e-8,
            method: Method::FrankWolfe,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::InvalidArgument("max_iters must be >= 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidArgument("tol must be > 0".into()));
        }
        Ok(())
    }
}

/// `min_{y ∈ 𝒴} linearᵀy + weight·‖Σ^{1/2}(A y + c)‖` on a polyhedral subspace.
pub fn solve_linear_plus_norm(
    domain: &Subspace,
    linear: &DVector<f64>,
    norm_weight: f64,
    chol: &CholFactor,
    map: &SensitivityMap,
    cfg: &SolverConfig,
) -> Result<LinNormSolution> {
    cfg.validate()?;
    check_dim("linear term", domain.dim(), linear.len())?;
    check_dim("sensitivity rows", chol.dim(), map.a.nrows())?;
    check_dim("sensitivity columns", domain.dim(), map.a.ncols())?;
    let poly = domain.polyhedron()?;
    let lt = chol.lt_active();
    let obj = LinearPlusNorm {
        linear: linear.clone(),
        offset: 0.0,
        weight: norm_weight,
        norm_map: lt * &map.a,
        norm_offset: lt * &map.c,
    };
    linnorm::minimize(&obj, &linnorm::Lmo::new(&poly), cfg, StopRule::Value)
}
