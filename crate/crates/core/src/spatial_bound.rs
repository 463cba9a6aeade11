//! Monte-Carlo estimate of the minimum spatial uniform bound by bisection.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ProblemSpec;
use crate::numerics::{chi_quantile, cholesky_psd, sample_mvn_batch, RngStream};
use crate::solve::{PsiContext, SolverConfig, Subspace};

/// Largest target probability kept finite in the chi brackets.
pub const MAX_TARGET: f64 = 1.0 - 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccuracyParams {
    pub alpha: f64,
    /// Quantile slack in the acceptance threshold `q ≥ p + β/2`.
    pub beta: f64,
    pub gamma: f64,
    /// Slack used to size the sample; equals `beta` unless `beta` is zero.
    pub sample_beta: f64,
}

impl AccuracyParams {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Result<Self> {
        let p = AccuracyParams {
            alpha,
            beta,
            gamma,
            sample_beta: beta,
        };
        p.validate()?;
        Ok(p)
    }

    /// `β = 0` in the threshold, with the sample sized by `sample_beta`.
    pub fn practical(alpha: f64, gamma: f64, sample_beta: f64) -> Result<Self> {
        let p = AccuracyParams {
            alpha,
            beta: 0.0,
            gamma,
            sample_beta,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| v > 0.0 && v < 1.0;
        if !unit(self.alpha) {
            return Err(Error::InvalidArgument(format!("alpha must be in (0, 1), got {}", self.alpha)));
        }
        if !(self.beta >= 0.0 && self.beta < 1.0) {
            return Err(Error::InvalidArgument(format!("beta must be in [0, 1), got {}", self.beta)));
        }
        if !unit(self.sample_beta) {
            return Err(Error::InvalidArgument(format!(
                "sample beta must be in (0, 1), got {}",
                self.sample_beta
            )));
        }
        if !(self.gamma > 0.0) {
            return Err(Error::InvalidArgument(format!("gamma must be > 0, got {}", self.gamma)));
        }
        Ok(())
    }

    pub fn num_samples(&self) -> usize {
        num_samples(self.alpha, self.sample_beta)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MuEstimate {
    pub mu_dot: f64,
    pub p: f64,
    #[serde(rename = "Q")]
    pub q_samples: usize,
    pub iterations: usize,
    pub samples_reused: bool,
    pub bracket: (f64, f64),
    pub lower_end: f64,
    pub final_rate: Option<f64>,
    /// Membership decisions that hit the iteration cap.
    pub uncertified: usize,
    pub solver_iterations: usize,
}

/// `Q = ⌈log(2/α) / (8β²)⌉`.
pub fn num_samples(alpha: f64, beta: f64) -> usize {
    ((2.0 / alpha).ln() / (8.0 * beta * beta)).ceil() as usize
}

/// Per-sample thresholds learned so far; ψ is monotone in λ.
#[derive(Debug, Clone, Copy)]
struct Known {
    member_at: f64,
    nonmember_at: f64,
}

struct Counter<'a> {
    ctx: &'a PsiContext,
    samples: &'a [DVector<f64>],
    known: Vec<Known>,
    cfg: SolverConfig,
    uncertified: usize,
    solver_iterations: usize,
}

impl<'a> Counter<'a> {
    fn new(ctx: &'a PsiContext, samples: &'a [DVector<f64>], cfg: &SolverConfig) -> Self {
        Counter {
            ctx,
            samples,
            known: vec![
                Known {
                    member_at: f64::INFINITY,
                    nonmember_at: f64::NEG_INFINITY,
                };
                samples.len()
            ],
            cfg: *cfg,
            uncertified: 0,
            solver_iterations: 0,
        }
    }

    fn rate(&mut self, lambda: f64) -> Result<f64> {
        let ctx = self.ctx;
        let cfg = self.cfg;
        let outcomes: Vec<Option<(bool, bool, usize)>> = self
            .known
            .par_iter()
            .zip(self.samples.par_iter())
            .enumerate()
            .map(|(i, (k, eps))| {
                if k.member_at <= lambda || k.nonmember_at >= lambda {
                    return Ok(None);
                }
                let m = ctx.membership(lambda, eps, &cfg).map_err(|e| Error::Sample {
                    sample: i,
                    lambda,
                    source: Box::new(e),
                })?;
                Ok(Some((m.member, m.certified, m.iterations)))
            })
            .collect::<Result<_>>()?;
        let mut count = 0usize;
        for (k, out) in self.known.iter_mut().zip(outcomes) {
            match out {
                None => count += (k.member_at <= lambda) as usize,
                Some((member, certified, iters)) => {
                    self.solver_iterations += iters;
                    self.uncertified += (!certified) as usize;
                    if member {
                        k.member_at = k.member_at.min(lambda);
                        count += 1;
                    } else {
                        k.nonmember_at = k.nonmember_at.max(lambda);
                    }
                }
            }
        }
        Ok(count as f64 / self.samples.len() as f64)
    }
}

/// Fraction of samples lying in `S(λ, 𝒴; Σ)`.
pub fn empirical_membership_rate(
    lambda: f64,
    eps_samples: &[DVector<f64>],
    ctx: &PsiContext,
    cfg: &SolverConfig,
) -> Result<f64> {
    if eps_samples.is_empty() {
        return Err(Error::Empty("error samples"));
    }
    Counter::new(ctx, eps_samples, cfg).rate(lambda)
}

fn clamp_target(p: f64) -> Result<f64> {
    if !(p >= 0.0) {
        return Err(Error::InvalidArgument(format!("target probability must be >= 0, got {p}")));
    }
    if p > MAX_TARGET {
        if p > 1.0 {
            log::warn!("target probability {p} clamped to {MAX_TARGET}");
        } else {
            log::info!("target probability {p} clamped to {MAX_TARGET}");
        }
        return Ok(MAX_TARGET);
    }
    Ok(p)
}

/// Bisection on a fixed sample set.
pub fn estimate_mu_with_samples(
    p: f64,
    ctx: &PsiContext,
    samples: &[DVector<f64>],
    dof: usize,
    acc: &AccuracyParams,
    cfg: &SolverConfig,
) -> Result<MuEstimate> {
    let p = clamp_target(p)?;
    let bracket = (chi_quantile(1, p)?, chi_quantile(dof.max(1), p)?);
    estimate_mu_in_bracket(p, ctx, samples, bracket, acc, cfg)
}

/// Bisection on an explicit bracket; `μ̇` is the upper end once the width drops below `γ`.
pub fn estimate_mu_in_bracket(
    p: f64,
    ctx: &PsiContext,
    samples: &[DVector<f64>],
    bracket: (f64, f64),
    acc: &AccuracyParams,
    cfg: &SolverConfig,
) -> Result<MuEstimate> {
    acc.validate()?;
    let p = clamp_target(p)?;
    if samples.is_empty() {
        return Err(Error::Empty("error samples"));
    }
    let (mut lo, mut hi) = bracket;
    if !(lo >= 0.0 && lo <= hi && hi.is_finite()) {
        return Err(Error::InvalidArgument(format!("invalid bracket [{lo}, {hi}]")));
    }
    let threshold = p + acc.beta / 2.0;
    let mut counter = Counter::new(ctx, samples, cfg);
    let mut iterations = 0;
    let mut final_rate = None;
    while hi - lo >= acc.gamma {
        let lambda = 0.5 * (lo + hi);
        let q = counter.rate(lambda)?;
        iterations += 1;
        final_rate = Some(q);
        if q >= threshold {
            hi = lambda;
        } else {
            lo = lambda;
        }
    }
    if counter.uncertified > 0 {
        log::warn!("{} membership decisions reached the iteration cap", counter.uncertified);
    }
    Ok(MuEstimate {
        mu_dot: hi,
        p,
        q_samples: samples.len(),
        iterations,
        samples_reused: true,
        bracket,
        lower_end: lo,
        final_rate,
        uncertified: counter.uncertified,
        solver_iterations: counter.solver_iterations,
    })
}

/// Draws `Q` errors from `N(0, Σ)` once and bisects on `[χ₁⁻¹(p), χ_r⁻¹(p)]`, `r = rank Σ`.
pub fn estimate_mu(
    p: f64,
    problem: &ProblemSpec,
    subspace: &Subspace,
    sigma: &DMatrix<f64>,
    acc: &AccuracyParams,
    cfg: &SolverConfig,
    rng: &RngStream,
) -> Result<MuEstimate> {
    acc.validate()?;
    cfg.validate()?;
    let factor = cholesky_psd(sigma)?;
    let ctx = PsiContext::new(problem, subspace, &factor)?;
    let samples = sample_mvn_batch(&factor, rng, acc.num_samples());
    estimate_mu_with_samples(p, &ctx, &samples, factor.rank(), acc, cfg)
}
