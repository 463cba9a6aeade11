//! PSD factorization and small dense helpers.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const ZERO_PIVOT_REL: f64 = 1e-12;
const NEG_PIVOT_REL: f64 = 1e-8;

/// Lower-triangular factor `L` with `L Lᵀ = Σ` for a PSD `Σ`.
///
/// Columns belonging to zero pivots are identically zero, so zero-variance
/// coordinates produce zero rows and `rank` counts the nonzero columns.
#[derive(Debug, Clone, PartialEq)]
pub struct CholFactor {
    l: DMatrix<f64>,
    rank: usize,
    /// `Lᵀ` restricted to the nonzero columns of `L` (rank × d).
    lt_active: DMatrix<f64>,
}

impl CholFactor {
    pub fn l(&self) -> &DMatrix<f64> {
        &self.l
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    /// Compact `Lᵀ` with zero rows dropped; `‖lt_active · v‖ = ‖Σ^{1/2} v‖`.
    pub fn lt_active(&self) -> &DMatrix<f64> {
        &self.lt_active
    }

    /// `‖Σ^{1/2} v‖₂`, computed as `‖Lᵀ v‖₂`.
    pub fn sigma_norm(&self, v: &DVector<f64>) -> f64 {
        (&self.lt_active * v).norm()
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.l * self.l.transpose()
    }

    pub fn zeros(d: usize) -> Self {
        CholFactor {
            l: DMatrix::zeros(d, d),
            rank: 0,
            lt_active: DMatrix::zeros(0, d),
        }
    }
}

/// Cholesky factorization of a symmetric PSD matrix, tolerant of rank deficiency.
///
/// Pivots below `1e-12 · trace` are treated as zero and their column is
/// dropped; a pivot below `-1e-8 · trace` rejects the input as not PSD.
pub fn cholesky_psd(sigma: &DMatrix<f64>) -> Result<CholFactor> {
    let d = sigma.nrows();
    if sigma.ncols() != d {
        return Err(Error::DimensionMismatch {
            what: "covariance columns",
            expected: d,
            actual: sigma.ncols(),
        });
    }
    let scale = sigma.trace().max(sigma.amax());
    if !scale.is_finite() {
        return Err(Error::InvalidArgument("covariance has non-finite entries".into()));
    }
    let asym = (sigma - sigma.transpose()).amax();
    if asym > 1e-10 * scale.max(1.0) {
        return Err(Error::InvalidArgument(format!(
            "covariance is not symmetric (max asymmetry {asym:.3e})"
        )));
    }
    let zero_tol = ZERO_PIVOT_REL * scale;
    let neg_tol = NEG_PIVOT_REL * scale;

    // outer-product form on a working copy
    let mut a = sigma.clone();
    let mut l = DMatrix::<f64>::zeros(d, d);
    let mut active = Vec::with_capacity(d);
    for j in 0..d {
        let pivot = a[(j, j)];
        if pivot < -neg_tol {
            return Err(Error::NotPsd {
                pivot,
                threshold: neg_tol,
            });
        }
        if pivot <= zero_tol {
            // the remaining column of a PSD matrix must vanish with its pivot
            for i in (j + 1)..d {
                if a[(i, j)].abs() > 1e-5 * scale {
                    return Err(Error::NotPsd {
                        pivot,
                        threshold: neg_tol,
                    });
                }
            }
            continue;
        }
        let root = pivot.sqrt();
        l[(j, j)] = root;
        for i in (j + 1)..d {
            l[(i, j)] = a[(i, j)] / root;
        }
        for c in (j + 1)..d {
            let lc = l[(c, j)];
            if lc == 0.0 {
                continue;
            }
            for r in c..d {
                let v = a[(r, c)] - l[(r, j)] * lc;
                a[(r, c)] = v;
                a[(c, r)] = v;
            }
        }
        active.push(j);
    }
    let rank = active.len();
    let mut lt_active = DMatrix::zeros(rank, d);
    for (row, &col) in active.iter().enumerate() {
        for i in 0..d {
            lt_active[(row, i)] = l[(i, col)];
        }
    }
    Ok(CholFactor { l, rank, lt_active })
}

/// Symmetric `Σ^{+1/2}` (pseudo-inverse square root) via eigendecomposition.
pub fn pinv_sqrt(sigma: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = sigma.clone().symmetric_eigen();
    let tol = 1e-12 * eig.eigenvalues.amax().max(f64::MIN_POSITIVE);
    let inv: DVector<f64> = eig
        .eigenvalues
        .map(|v| if v > tol { 1.0 / v.sqrt() } else { 0.0 });
    &eig.eigenvectors * DMatrix::from_diagonal(&inv) * eig.eigenvectors.transpose()
}
