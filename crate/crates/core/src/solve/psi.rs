//! The membership objective `ψ(μ, ε) = min_{k,±} min_{y ∈ 𝒴} ±εᵀv_k(y) + μ r_k(y)`.

use nalgebra::{DMatrix, DVector};

use super::linnorm::{minimize, LinearPlusNorm, Lmo, StopRule};
use super::{SolverConfig, Subspace};
use crate::error::{check_dim, Error, Result};
use crate::model::ProblemSpec;
use crate::numerics::{cholesky_psd, CholFactor, Polyhedron};

/// Absolute slack on ψ under which an error vector still counts as a member.
pub const MEMBERSHIP_TOL: f64 = 1e-7;

/// Precomputed data for repeated ψ evaluations on one `(𝒴, Σ)` pair.
#[derive(Debug, Clone)]
pub struct PsiContext {
    lmo: Lmo,
    /// Variables kept after projecting out those invisible to ψ.
    kept: Vec<usize>,
    terms: Vec<Term>,
    d: usize,
}

#[derive(Debug, Clone)]
struct Term {
    a: DMatrix<f64>,
    c: DVector<f64>,
    norm_map: DMatrix<f64>,
    norm_offset: DVector<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Membership {
    pub member: bool,
    /// Whether a bound settled the decision rather than the iteration cap.
    pub certified: bool,
    pub psi_upper: f64,
    pub iterations: usize,
}

impl PsiContext {
    pub fn new(problem: &ProblemSpec, subspace: &Subspace, factor: &CholFactor) -> Result<PsiContext> {
        check_dim("covariance", problem.d, factor.dim())?;
        let mut poly: Polyhedron = subspace.polyhedron()?;
        let lt = factor.lt_active();
        // a variable is invisible if no non-dummy sensitivity row and no norm row touches it
        let invisible = |i: usize| {
            problem.constraints.iter().all(|map| {
                (0..problem.d).all(|j| problem.is_dummy(j) || map.a[(j, i)] == 0.0)
                    && (lt * map.a.column(i)).amax() == 0.0
            })
        };
        let mut kept: Vec<usize> = (0..problem.m).collect();
        for i in (0..problem.m).rev() {
            if invisible(i) {
                poly = poly.project_out(i);
                kept.remove(i);
            }
        }
        let terms = problem
            .constraints
            .iter()
            .map(|map| {
                let a = DMatrix::from_fn(problem.d, kept.len(), |r, c| map.a[(r, kept[c])]);
                Term {
                    norm_map: lt * &a,
                    norm_offset: lt * &map.c,
                    a,
                    c: map.c.clone(),
                }
            })
            .collect();
        Ok(PsiContext {
            lmo: Lmo::new(&poly),
            kept,
            terms,
            d: problem.d,
        })
    }

    pub fn reduced_dim(&self) -> usize {
        self.kept.len()
    }

    fn halves(&self, mu: f64, eps: &DVector<f64>) -> impl Iterator<Item = LinearPlusNorm> + '_ {
        let mut items = Vec::with_capacity(2 * self.terms.len());
        for t in &self.terms {
            let lin = t.a.tr_mul(eps);
            let off = eps.dot(&t.c);
            for sign in [1.0, -1.0] {
                items.push(LinearPlusNorm {
                    linear: &lin * sign,
                    offset: off * sign,
                    weight: mu,
                    norm_map: t.norm_map.clone(),
                    norm_offset: t.norm_offset.clone(),
                });
            }
        }
        items.into_iter()
    }

    /// ψ evaluated to `cfg.tol`; the returned value is an upper bound.
    pub fn psi(&self, mu: f64, eps: &DVector<f64>, cfg: &SolverConfig) -> Result<f64> {
        check_dim("error vector", self.d, eps.len())?;
        let mut best = f64::INFINITY;
        for obj in self.halves(mu, eps) {
            let r = minimize(&obj, &self.lmo, cfg, StopRule::Value)?;
            if !r.converged {
                log::warn!("psi subproblem stopped with gap {:.3e}", r.gap());
            }
            best = best.min(r.value);
        }
        Ok(best)
    }

    /// Decides `ψ(μ, ε) ≥ −MEMBERSHIP_TOL`, stopping at the first certificate.
    pub fn membership(&self, mu: f64, eps: &DVector<f64>, cfg: &SolverConfig) -> Result<Membership> {
        check_dim("error vector", self.d, eps.len())?;
        let mut out = Membership {
            member: true,
            certified: true,
            psi_upper: f64::INFINITY,
            iterations: 0,
        };
        for obj in self.halves(mu, eps) {
            let r = minimize(&obj, &self.lmo, cfg, StopRule::Sign { tol: MEMBERSHIP_TOL })?;
            out.iterations += r.iterations;
            out.psi_upper = out.psi_upper.min(r.value);
            if r.value < -MEMBERSHIP_TOL {
                out.member = false;
                out.certified = r.converged;
                return Ok(out);
            }
            // undecided halves count as members
            out.certified &= r.converged;
        }
        Ok(out)
    }
}

/// ψ for a single `(μ, ε)`; builds the context each call.
pub fn psi(
    problem: &ProblemSpec,
    subspace: &Subspace,
    sigma: &DMatrix<f64>,
    mu: f64,
    eps: &DVector<f64>,
    cfg: &SolverConfig,
) -> Result<f64> {
    if !(mu >= 0.0) {
        return Err(Error::InvalidArgument(format!("mu must be >= 0, got {mu}")));
    }
    let factor = cholesky_psd(sigma)?;
    PsiContext::new(problem, subspace, &factor)?.psi(mu, eps, cfg)
}

/// Whether `ε ∈ S(μ, 𝒴; Σ)`, i.e. `ψ(μ, ε) ≥ −MEMBERSHIP_TOL`.
pub fn in_s(
    problem: &ProblemSpec,
    subspace: &Subspace,
    sigma: &DMatrix<f64>,
    mu: f64,
    eps: &DVector<f64>,
    cfg: &SolverConfig,
) -> Result<bool> {
    if !(mu >= 0.0) {
        return Err(Error::InvalidArgument(format!("mu must be >= 0, got {mu}")));
    }
    let factor = cholesky_psd(sigma)?;
    Ok(PsiContext::new(problem, subspace, &factor)?.membership(mu, eps, cfg)?.member)
}
