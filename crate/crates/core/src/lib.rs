//! Scale calibration for data-driven robust optimization with ellipsoidal uncertainty.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod bench;
pub mod calibrate;
pub mod error;
pub mod estimate;
pub mod model;
pub mod numerics;
pub mod solve;
pub mod spatial_bound;

pub use bench::{generate_portfolio, run_sweep, run_trial, ScaleMethod, SweepConfig, SweepReport, TrialRecord};
pub use calibrate::{
    algo_constants, baseline_scales, calibrate_scale, check_sandwich, reduced_domain, AlgoConstants,
    CalibrationConfig, CalibrationResult, Mode,
};
pub use error::{Error, Result};
pub use estimate::{empirical_moments, EmpiricalEstimate};
pub use model::{EllipsoidalUncertainty, ProblemSpec, SensitivityMap, TrueModel};
pub use numerics::{chi_cdf, chi_quantile, cholesky_psd, CholFactor, Polyhedron, RngStream};
pub use solve::{in_s, psi, solve_robust, Method, NormMode, SolverConfig, Subspace};
pub use spatial_bound::{estimate_mu, AccuracyParams, MuEstimate};
