//! Dense two-phase simplex with Bland's rule over `{x : G x <= h, x_j >= 0 for flagged j}`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

const PIVOT_EPS: f64 = 1e-11;

/// Inequality polyhedron `{x : G x <= h}` with optional per-variable nonnegativity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polyhedron {
    pub g: DMatrix<f64>,
    pub h: DVector<f64>,
    pub nonneg: Vec<bool>,
}

impl Polyhedron {
    pub fn new(g: DMatrix<f64>, h: DVector<f64>, nonneg: Vec<bool>) -> Result<Self> {
        check_dim("polyhedron rhs", g.nrows(), h.len())?;
        check_dim("polyhedron nonneg flags", g.ncols(), nonneg.len())?;
        Ok(Polyhedron { g, h, nonneg })
    }

    /// Box `lo <= x <= hi` expressed as inequality rows.
    pub fn boxed(lo: &[f64], hi: &[f64]) -> Self {
        let n = lo.len();
        let mut g = DMatrix::zeros(2 * n, n);
        let mut h = DVector::zeros(2 * n);
        for j in 0..n {
            g[(2 * j, j)] = 1.0;
            h[2 * j] = hi[j];
            g[(2 * j + 1, j)] = -1.0;
            h[2 * j + 1] = -lo[j];
        }
        Polyhedron {
            g,
            h,
            nonneg: vec![false; n],
        }
    }

    pub fn dim(&self) -> usize {
        self.g.ncols()
    }

    pub fn num_rows(&self) -> usize {
        self.g.nrows()
    }

    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> bool {
        if x.len() != self.dim() {
            return false;
        }
        if self.nonneg.iter().zip(x.iter()).any(|(&nn, &v)| nn && v < -tol) {
            return false;
        }
        let gx = &self.g * x;
        gx.iter().zip(self.h.iter()).all(|(a, b)| *a <= *b + tol)
    }

    /// Adds the row `a · x <= b`.
    pub fn with_row(&self, a: &DVector<f64>, b: f64) -> Self {
        let rows = self.num_rows();
        let mut g = self.g.clone().insert_row(rows, 0.0);
        g.row_mut(rows).copy_from(&a.transpose());
        let h = self.h.clone().push(b);
        Polyhedron {
            g,
            h,
            nonneg: self.nonneg.clone(),
        }
    }

    /// Drops variable `j`; rows that used it must not exist.
    pub fn without_var(&self, j: usize) -> Result<Self> {
        if self.g.column(j).amax() != 0.0 {
            return Err(Error::InvalidProblem(format!(
                "variable {j} appears in domain rows and cannot be eliminated"
            )));
        }
        let mut nonneg = self.nonneg.clone();
        nonneg.remove(j);
        Ok(Polyhedron {
            g: self.g.clone().remove_column(j),
            h: self.h.clone(),
            nonneg,
        })
    }

    /// Projection onto the remaining variables by Fourier–Motzkin elimination of `j`.
    pub fn project_out(&self, j: usize) -> Self {
        let n = self.dim();
        let mut upper = Vec::new();
        let mut lower = Vec::new();
        let mut keep = Vec::new();
        for i in 0..self.num_rows() {
            let a = self.g[(i, j)];
            let row: Vec<f64> = self.g.row(i).iter().copied().collect();
            if a > 0.0 {
                upper.push((row, self.h[i]));
            } else if a < 0.0 {
                lower.push((row, self.h[i]));
            } else {
                keep.push((row, self.h[i]));
            }
        }
        if self.nonneg[j] {
            let mut row = vec![0.0; n];
            row[j] = -1.0;
            lower.push((row, 0.0));
        }
        for (ru, hu) in &upper {
            for (rl, hl) in &lower {
                let (cu, cl) = (ru[j], -rl[j]);
                let row: Vec<f64> = (0..n).map(|c| ru[c] * cl + rl[c] * cu).collect();
                keep.push((row, hu * cl + hl * cu));
            }
        }
        let cols: Vec<usize> = (0..n).filter(|&c| c != j).collect();
        let g = DMatrix::from_fn(keep.len(), n - 1, |i, c| keep[i].0[cols[c]]);
        let h = DVector::from_iterator(keep.len(), keep.iter().map(|r| r.1));
        let nonneg = cols.iter().map(|&c| self.nonneg[c]).collect();
        Polyhedron { g, h, nonneg }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub x: DVector<f64>,
    pub value: f64,
}

struct Tableau {
    rows: usize,
    /// columns excluding the rhs
    cols: usize,
    /// row-major, `cols + 1` entries per row, last is rhs
    a: Vec<f64>,
    basis: Vec<usize>,
}

impl Tableau {
    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.a[i * (self.cols + 1) + j]
    }

    fn rhs(&self, i: usize) -> f64 {
        self.at(i, self.cols)
    }

    fn pivot(&mut self, obj: &mut [f64], r: usize, c: usize) {
        let w = self.cols + 1;
        let p = self.a[r * w + c];
        for j in 0..w {
            self.a[r * w + j] /= p;
        }
        for i in 0..self.rows {
            if i == r {
                continue;
            }
            let f = self.a[i * w + c];
            if f != 0.0 {
                for j in 0..w {
                    self.a[i * w + j] -= f * self.a[r * w + j];
                }
                self.a[i * w + c] = 0.0;
            }
        }
        let f = obj[c];
        if f != 0.0 {
            for j in 0..w {
                obj[j] -= f * self.a[r * w + j];
            }
            obj[c] = 0.0;
        }
        self.basis[r] = c;
    }

    /// Reduced-cost row for `cost`, with the negated objective value in the last slot.
    fn objective_row(&self, cost: &[f64]) -> Vec<f64> {
        let w = self.cols + 1;
        let mut obj = vec![0.0; w];
        obj[..self.cols].copy_from_slice(cost);
        for i in 0..self.rows {
            let cb = cost[self.basis[i]];
            if cb != 0.0 {
                for j in 0..w {
                    obj[j] -= cb * self.a[i * w + j];
                }
            }
        }
        obj
    }

    /// Bland's rule iterations; `allowed` masks entering columns.
    fn run(&mut self, obj: &mut [f64], allowed: &[bool], eps: f64) -> Result<()> {
        let max_pivots = 50 * (self.rows + self.cols) + 1000;
        for _ in 0..max_pivots {
            let enter = (0..self.cols).find(|&j| allowed[j] && obj[j] < -eps);
            let Some(c) = enter else {
                return Ok(());
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.rows {
                let aic = self.at(i, c);
                if aic > PIVOT_EPS {
                    let ratio = self.rhs(i).max(0.0) / aic;
                    match leave {
                        None => leave = Some((i, ratio)),
                        Some((li, lr)) => {
                            let tie = (ratio - lr).abs() <= 1e-12 * (1.0 + lr.abs());
                            if (!tie && ratio < lr) || (tie && self.basis[i] < self.basis[li]) {
                                leave = Some((i, ratio));
                            }
                        }
                    }
                }
            }
            let Some((r, _)) = leave else {
                return Err(Error::Unbounded);
            };
            self.pivot(obj, r, c);
        }
        Err(Error::NonConvergence {
            iterations: max_pivots,
            gap: f64::NAN,
            best_value: f64::NAN,
            best: Vec::new(),
        })
    }
}

/// Minimizes `costᵀ x` over the polyhedron, returning an optimal basic solution.
pub fn solve_lp(cost: &DVector<f64>, poly: &Polyhedron) -> Result<LpSolution> {
    let n = poly.dim();
    check_dim("lp cost", n, cost.len())?;
    let m = poly.num_rows();

    // column layout: one column per nonneg var, two for free vars, then slacks, then artificials
    let mut var_cols: Vec<(usize, Option<usize>)> = Vec::with_capacity(n);
    let mut ncols = 0;
    for j in 0..n {
        if poly.nonneg[j] {
            var_cols.push((ncols, None));
            ncols += 1;
        } else {
            var_cols.push((ncols, Some(ncols + 1)));
            ncols += 2;
        }
    }
    let slack0 = ncols;
    ncols += m;
    let needs_art: Vec<usize> = (0..m).filter(|&i| poly.h[i] < 0.0).collect();
    let art0 = ncols;
    ncols += needs_art.len();

    let w = ncols + 1;
    let mut a = vec![0.0; m * w];
    let mut basis = vec![0; m];
    let mut art_idx = 0;
    for i in 0..m {
        let sign = if poly.h[i] < 0.0 { -1.0 } else { 1.0 };
        for (j, &(pos, neg)) in var_cols.iter().enumerate() {
            let gij = poly.g[(i, j)];
            a[i * w + pos] = sign * gij;
            if let Some(neg) = neg {
                a[i * w + neg] = -sign * gij;
            }
        }
        a[i * w + slack0 + i] = sign;
        a[i * w + ncols] = sign * poly.h[i];
        if sign < 0.0 {
            let col = art0 + art_idx;
            a[i * w + col] = 1.0;
            basis[i] = col;
            art_idx += 1;
        } else {
            basis[i] = slack0 + i;
        }
    }
    let mut t = Tableau {
        rows: m,
        cols: ncols,
        a,
        basis,
    };

    let scale = 1.0 + poly.h.amax();
    let cost_scale = 1.0 + cost.amax();
    let eps = 1e-11 * cost_scale;

    if !needs_art.is_empty() {
        let mut c1 = vec![0.0; ncols];
        for c in c1.iter_mut().skip(art0) {
            *c = 1.0;
        }
        let mut obj = t.objective_row(&c1);
        let allowed = vec![true; ncols];
        t.run(&mut obj, &allowed, 1e-11)?;
        let infeas = -obj[ncols];
        if infeas > 1e-9 * scale {
            return Err(Error::Infeasible);
        }
        // drive remaining artificials out of the basis
        let mut redundant = Vec::new();
        for i in 0..t.rows {
            if t.basis[i] >= art0 {
                let col = (0..art0).find(|&j| t.at(i, j).abs() > 1e-9);
                match col {
                    Some(j) => {
                        let mut dummy = vec![0.0; ncols + 1];
                        t.pivot(&mut dummy, i, j);
                    }
                    None => redundant.push(i),
                }
            }
        }
        if !redundant.is_empty() {
            let mut kept = Vec::with_capacity((t.rows - redundant.len()) * w);
            let mut kept_basis = Vec::new();
            for i in 0..t.rows {
                if !redundant.contains(&i) {
                    kept.extend_from_slice(&t.a[i * w..(i + 1) * w]);
                    kept_basis.push(t.basis[i]);
                }
            }
            t.a = kept;
            t.basis = kept_basis;
            t.rows -= redundant.len();
        }
    }

    let mut c2 = vec![0.0; ncols];
    for (j, &(pos, neg)) in var_cols.iter().enumerate() {
        c2[pos] = cost[j];
        if let Some(neg) = neg {
            c2[neg] = -cost[j];
        }
    }
    let mut obj = t.objective_row(&c2);
    let allowed: Vec<bool> = (0..ncols).map(|j| j < art0).collect();
    t.run(&mut obj, &allowed, eps)?;

    let mut col_val = vec![0.0; ncols];
    for i in 0..t.rows {
        col_val[t.basis[i]] = t.rhs(i).max(0.0);
    }
    let x = DVector::from_iterator(
        n,
        var_cols
            .iter()
            .map(|&(pos, neg)| col_val[pos] - neg.map_or(0.0, |k| col_val[k])),
    );
    let value = cost.dot(&x);
    Ok(LpSolution { x, value })
}
