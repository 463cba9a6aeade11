//! `min_{y ∈ P} lᵀy + b + ω‖M y + m₀‖₂` over a bounded polyhedron.
//!
//! Pairwise Frank–Wolfe on a Huber-smoothed norm with a shrinking smoothing
//! radius. Every iterate yields an exact upper bound `F(y)`; every oracle call
//! yields a lower bound from the conjugate of the norm, so the reported
//! interval always contains the optimum.

use nalgebra::{DMatrix, DVector};

use super::SolverConfig;
use crate::error::{Error, Result};
use crate::numerics::{project_simplex, project_simplex_eq, solve_lp, Polyhedron};

/// Linear minimization oracle over a bounded polyhedron.
#[derive(Debug, Clone)]
pub(crate) enum Lmo {
    /// `{y ≥ 0, Σy ≤ r}` or, when `exact`, `{y ≥ 0, Σy = r}`.
    Simplex { radius: f64, exact: bool, dim: usize },
    General(Polyhedron),
}

impl Lmo {
    pub fn new(poly: &Polyhedron) -> Lmo {
        match simplex_shape(poly) {
            Some((radius, exact)) => Lmo::Simplex {
                radius,
                exact,
                dim: poly.dim(),
            },
            None => Lmo::General(poly.clone()),
        }
    }

    pub fn minimize(&self, cost: &DVector<f64>) -> Result<DVector<f64>> {
        match self {
            Lmo::Simplex { radius, exact, dim } => {
                let mut best = None;
                let mut best_val = if *exact { f64::INFINITY } else { 0.0 };
                for (j, &c) in cost.iter().enumerate() {
                    if c < best_val {
                        best_val = c;
                        best = Some(j);
                    }
                }
                let mut v = DVector::zeros(*dim);
                if let Some(j) = best {
                    v[j] = *radius;
                }
                Ok(v)
            }
            Lmo::General(poly) => Ok(solve_lp(cost, poly)?.x),
        }
    }

    pub fn project(&self, v: &DVector<f64>) -> Option<DVector<f64>> {
        match self {
            Lmo::Simplex {
                radius,
                exact: true,
                ..
            } => Some(project_simplex_eq(v, *radius)),
            Lmo::Simplex { radius, .. } => Some(project_simplex(v, *radius)),
            Lmo::General(_) => None,
        }
    }
}

/// Recognizes `{y ≥ 0, 1ᵀy ≤ r}` and `{y ≥ 0, 1ᵀy ≤ r, −1ᵀy ≤ −r}`.
pub(crate) fn simplex_shape(poly: &Polyhedron) -> Option<(f64, bool)> {
    if poly.dim() == 0 || !poly.nonneg.iter().all(|&b| b) {
        return None;
    }
    let mut upper = None;
    let mut lower = None;
    for i in 0..poly.num_rows() {
        let row = poly.g.row(i);
        if row.iter().all(|&v| v == 0.0) {
            if poly.h[i] < 0.0 {
                return None;
            }
            continue;
        }
        let first = row[0];
        if first == 0.0 || row.iter().any(|&v| v != first) {
            return None;
        }
        let r = poly.h[i] / first;
        if first > 0.0 {
            upper = Some(upper.map_or(r, |u: f64| u.min(r)));
        } else {
            lower = Some(lower.map_or(r, |l: f64| l.max(r)));
        }
    }
    let upper = upper?;
    if !(upper > 0.0) {
        return None;
    }
    match lower {
        None => Some((upper, false)),
        Some(l) if l <= 0.0 => Some((upper, false)),
        Some(l) if (l - upper).abs() <= 1e-12 * upper => Some((upper, true)),
        Some(_) => None,
    }
}

/// Objective `lᵀy + offset + weight·‖norm_map·y + norm_offset‖`.
#[derive(Debug, Clone)]
pub struct LinearPlusNorm {
    pub linear: DVector<f64>,
    pub offset: f64,
    pub weight: f64,
    pub norm_map: DMatrix<f64>,
    pub norm_offset: DVector<f64>,
}

impl LinearPlusNorm {
    pub fn value(&self, y: &DVector<f64>) -> f64 {
        self.linear.dot(y) + self.offset + self.weight * (&self.norm_map * y + &self.norm_offset).norm()
    }
}

/// What to stop on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StopRule {
    /// Bracket the optimum to within `cfg.tol · max(1, |value|)`.
    Value,
    /// Decide whether the optimum is `≥ −tol`; stops at the first certificate.
    Sign { tol: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinNormSolution {
    pub y: DVector<f64>,
    /// Objective at `y`; an upper bound on the optimum.
    pub value: f64,
    /// Certified lower bound on the optimum.
    pub lower: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl LinNormSolution {
    pub fn gap(&self) -> f64 {
        self.value - self.lower
    }
}

struct Atom {
    v: DVector<f64>,
    mv: DVector<f64>,
    weight: f64,
}

fn same_vertex(a: &DVector<f64>, b: &DVector<f64>) -> bool {
    let scale = 1.0 + a.amax().max(b.amax());
    (a - b).amax() <= 1e-12 * scale
}

/// Derivative of the smoothed norm along `w + t z` at `t`, from cached inner products.
fn huber_slope(ww: f64, wz: f64, zz: f64, t: f64, rho: f64) -> f64 {
    let sq = (ww + 2.0 * t * wz + t * t * zz).max(0.0);
    (wz + t * zz) / sq.sqrt().max(rho)
}

pub(crate) fn minimize(
    obj: &LinearPlusNorm,
    lmo: &Lmo,
    cfg: &SolverConfig,
    stop: StopRule,
) -> Result<LinNormSolution> {
    let omega = obj.weight;
    if !(omega >= 0.0) {
        return Err(Error::InvalidArgument(format!("norm weight must be >= 0, got {omega}")));
    }
    let m_map = &obj.norm_map;
    let l = &obj.linear;

    if omega == 0.0 || m_map.nrows() == 0 || m_map.amax() == 0.0 {
        let y = lmo.minimize(l)?;
        let value = obj.value(&y);
        return Ok(LinNormSolution {
            y,
            value,
            lower: value,
            iterations: 0,
            converged: true,
        });
    }

    let target = match stop {
        StopRule::Value => cfg.tol,
        StopRule::Sign { tol } => tol,
    };
    let rho_min = (0.5 * target / omega).max(f64::MIN_POSITIVE);

    let w0 = &obj.norm_offset;
    let s0 = if w0.norm() > 0.0 { w0 / w0.norm() } else { DVector::zeros(w0.len()) };
    let v0 = lmo.minimize(&(l + m_map.tr_mul(&s0) * omega))?;
    let mv0 = m_map * &v0;
    let mut y = v0.clone();
    let mut w = &mv0 + w0;
    let mut atoms = vec![Atom {
        v: v0,
        mv: mv0,
        weight: 1.0,
    }];

    let mut rho = 1e-2 * (w.norm() + m_map.norm()).max(1e-12);
    let mut ub = f64::INFINITY;
    let mut lb = f64::NEG_INFINITY;
    let mut best = y.clone();

    for it in 0..cfg.max_iters {
        if it % 64 == 63 {
            // recompute from the atoms to stop drift
            y.fill(0.0);
            w.copy_from(w0);
            for a in &atoms {
                y.axpy(a.weight, &a.v, 1.0);
                w.axpy(a.weight, &a.mv, 1.0);
            }
        }
        let nw = w.norm();
        let f = l.dot(&y) + obj.offset + omega * nw;
        if f < ub {
            ub = f;
            best.copy_from(&y);
        }
        let s = &w / nw.max(rho);
        let grad = l + m_map.tr_mul(&s) * omega;
        let u = lmo.minimize(&grad)?;
        let h = grad.dot(&u) + obj.offset + omega * s.dot(w0);
        lb = lb.max(h);

        let done = match stop {
            StopRule::Value => ub - lb <= cfg.tol * ub.abs().max(1.0),
            StopRule::Sign { tol } => lb >= -tol || ub < -tol,
        };
        if done {
            return Ok(LinNormSolution {
                y: best,
                value: ub,
                lower: lb,
                iterations: it + 1,
                converged: true,
            });
        }

        // pairwise direction: toward the oracle vertex, away from the worst atom
        let (away, _) = atoms
            .iter()
            .enumerate()
            .map(|(i, a)| (i, grad.dot(&a.v)))
            .fold((0, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
        let fw_gap = grad.dot(&y) - grad.dot(&u);
        let pair_slope = grad.dot(&u) - grad.dot(&atoms[away].v);
        if fw_gap <= 0.25 * omega * rho || pair_slope >= 0.0 {
            if rho > rho_min {
                rho = (rho * 0.1).max(rho_min);
                continue;
            }
            if pair_slope >= 0.0 {
                break;
            }
        }

        let mu_vertex = m_map * &u;
        let z = &mu_vertex - &atoms[away].mv;
        let d = &u - &atoms[away].v;
        let a_lin = l.dot(&d);
        let t_max = atoms[away].weight;
        let (ww, wz, zz) = (w.dot(&w), w.dot(&z), z.dot(&z));
        let slope = |t: f64| a_lin + omega * huber_slope(ww, wz, zz, t, rho);
        let t = if slope(t_max) <= 0.0 {
            t_max
        } else {
            let (mut lo, mut hi) = (0.0, t_max);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if slope(mid) > 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
                if hi - lo <= 1e-16 * t_max {
                    break;
                }
            }
            0.5 * (lo + hi)
        };
        if t <= 0.0 {
            if rho > rho_min {
                rho = (rho * 0.1).max(rho_min);
                continue;
            }
            break;
        }

        y.axpy(t, &d, 1.0);
        w.axpy(t, &z, 1.0);
        let target_idx = atoms.iter().position(|a| same_vertex(&a.v, &u));
        match target_idx {
            Some(i) => atoms[i].weight += t,
            None => atoms.push(Atom {
                v: u,
                mv: mu_vertex,
                weight: t,
            }),
        }
        atoms[away].weight -= t;
        if atoms[away].weight <= 1e-15 || t == t_max {
            atoms.swap_remove(away);
        }
    }

    let nw = w.norm();
    let f = l.dot(&y) + obj.offset + omega * nw;
    if f < ub {
        ub = f;
        best.copy_from(&y);
    }
    let converged = match stop {
        StopRule::Value => ub - lb <= cfg.tol * ub.abs().max(1.0),
        StopRule::Sign { tol } => lb >= -tol || ub < -tol,
    };
    Ok(LinNormSolution {
        y: best,
        value: ub,
        lower: lb,
        iterations: cfg.max_iters,
        converged,
    })
}

/// Projected subgradient for simplex domains, with the same certified bounds.
pub(crate) fn minimize_subgradient(
    obj: &LinearPlusNorm,
    lmo: &Lmo,
    cfg: &SolverConfig,
) -> Result<LinNormSolution> {
    let omega = obj.weight;
    let dim = obj.linear.len();
    let radius = match lmo {
        Lmo::Simplex { radius, .. } => *radius,
        Lmo::General(_) => {
            return Err(Error::InvalidArgument(
                "projected subgradient needs a simplex domain".into(),
            ))
        }
    };
    let diam = radius * std::f64::consts::SQRT_2;
    let mut y = lmo
        .project(&DVector::from_element(dim, radius / dim as f64))
        .expect("simplex projection");
    let mut ub = f64::INFINITY;
    let mut lb = f64::NEG_INFINITY;
    let mut best = y.clone();
    for it in 0..cfg.max_iters {
        let w = &obj.norm_map * &y + &obj.norm_offset;
        let nw = w.norm();
        let f = obj.linear.dot(&y) + obj.offset + omega * nw;
        if f < ub {
            ub = f;
            best.copy_from(&y);
        }
        let s = if nw > 0.0 { &w / nw } else { DVector::zeros(w.len()) };
        let g = &obj.linear + obj.norm_map.tr_mul(&s) * omega;
        let u = lmo.minimize(&g)?;
        lb = lb.max(g.dot(&u) + obj.offset + omega * s.dot(&obj.norm_offset));
        if ub - lb <= cfg.tol * ub.abs().max(1.0) {
            return Ok(LinNormSolution {
                y: best,
                value: ub,
                lower: lb,
                iterations: it + 1,
                converged: true,
            });
        }
        let gn = g.norm();
        if gn == 0.0 {
            break;
        }
        // Polyak step against the certified lower bound
        let step = ((f - lb) / (gn * gn)).min(diam / (gn * ((it + 1) as f64).sqrt()));
        y = lmo.project(&(&y - g * step)).expect("simplex projection");
    }
    Ok(LinNormSolution {
        y: best,
        value: ub,
        lower: lb,
        iterations: cfg.max_iters,
        converged: ub - lb <= cfg.tol * ub.abs().max(1.0),
    })
}
