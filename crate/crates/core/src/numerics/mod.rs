//! Numeric kernels: chi distribution, PSD factorization, seeded sampling,
//! simplex projection, dense LP and empirical quantiles.

pub mod chi;
pub mod linalg;
pub mod lp;
pub mod projection;
pub mod quantile;
pub mod rng;

pub use chi::{chi_cdf, chi_quantile};
pub use linalg::{cholesky_psd, CholFactor};
pub use lp::{solve_lp, LpSolution, Polyhedron};
pub use projection::{project_simplex, project_simplex_eq};
pub use quantile::empirical_quantile;
pub use rng::{sample_mvn, sample_mvn_batch, RngStream};
