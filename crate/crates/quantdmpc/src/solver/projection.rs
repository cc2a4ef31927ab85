//! Euclidean projections onto the local constraint sets.
//!
//! * boxes are clamped componentwise;
//! * polytopes use a dual active-set method that adds the most violated
//!   half-space and drops constraints whose multiplier would turn negative;
//! * affine-plus-box sets default to a semismooth Newton method on the dual of the
//!   equality constraints, with Dykstra's alternating projections available;
//! * the ellipsoid variant runs Dykstra between the affine-plus-box projection and
//!   the exact ellipsoid projection.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::netqp::{AffineBoxSet, Ellipsoid, LocalConstraintSet, PolytopeSet};

/// Subsolver used for affine-plus-box sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AffineMethod {
    Newton,
    Dykstra,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectionOptions {
    /// Feasibility tolerance of the returned point.
    pub tolerance: f64,
    /// Newton iterations per affine-plus-box projection.
    pub newton_iterations: usize,
    /// Dykstra sweeps.
    pub sweeps: usize,
    pub method: AffineMethod,
}

impl Default for ProjectionOptions {
    fn default() -> Self {
        Self { tolerance: 1e-9, newton_iterations: 200, sweeps: 500, method: AffineMethod::Newton }
    }
}

/// Dual information reused between consecutive projections onto the same set.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ProjectionWarmStart {
    dual: Option<DVector<f64>>,
}

/// Project without warm start.
pub fn project(set: &LocalConstraintSet, point: &DVector<f64>, opts: &ProjectionOptions) -> Result<DVector<f64>> {
    project_warm(set, point, opts, &mut ProjectionWarmStart::default())
}

/// Project, reusing and updating `warm`.
pub fn project_warm(
    set: &LocalConstraintSet,
    point: &DVector<f64>,
    opts: &ProjectionOptions,
    warm: &mut ProjectionWarmStart,
) -> Result<DVector<f64>> {
    if point.len() != set.dim() {
        return Err(Error::DimensionMismatch(format!("point has {} entries, set {}", point.len(), set.dim())));
    }
    if point.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    match set {
        LocalConstraintSet::Box(b) => Ok(b.clamp(point)),
        LocalConstraintSet::Polytope(p) => project_polytope(p, point, opts.tolerance),
        LocalConstraintSet::AffineIntersectBox(a) => project_affine_box(a, point, opts, warm),
        LocalConstraintSet::AffineBoxEllipsoid(a, e) => project_with_ellipsoid(a, e, point, opts, warm),
    }
}

fn project_affine_box(
    set: &AffineBoxSet,
    point: &DVector<f64>,
    opts: &ProjectionOptions,
    warm: &mut ProjectionWarmStart,
) -> Result<DVector<f64>> {
    match opts.method {
        AffineMethod::Newton => newton_affine_box(set, point, opts, warm),
        AffineMethod::Dykstra => dykstra_affine_box(set, point, opts),
    }
}

/// Dual semismooth Newton: `x(λ) = clamp(v − Aᵀλ)`, ascend the concave dual
/// with the generalized Hessian `A D Aᵀ` (`D` marks free coordinates).
fn newton_affine_box(
    set: &AffineBoxSet,
    v: &DVector<f64>,
    opts: &ProjectionOptions,
    warm: &mut ProjectionWarmStart,
) -> Result<DVector<f64>> {
    let a = &set.aeq;
    let p = a.nrows();
    if p == 0 {
        return Ok(set.bounds.clamp(v));
    }
    let cols = set.sparse_columns();
    let mut lam = match &warm.dual {
        Some(l) if l.len() == p => l.clone(),
        _ => DVector::zeros(p),
    };
    let primal = |lam: &DVector<f64>| -> (DVector<f64>, DVector<f64>) {
        let mut w = v.clone();
        for (k, col) in cols.iter().enumerate() {
            let mut s = 0.0;
            for &(r, val) in col {
                s += val * lam[r];
            }
            w[k] -= s;
        }
        let x = set.bounds.clamp(&w);
        (w, x)
    };
    let residual = |x: &DVector<f64>| -> DVector<f64> {
        let mut r = -set.beq.clone();
        for (k, col) in cols.iter().enumerate() {
            for &(row, val) in col {
                r[row] += val * x[k];
            }
        }
        r
    };
    let dual_value = |lam: &DVector<f64>, x: &DVector<f64>, r: &DVector<f64>| 0.5 * (x - v).norm_squared() + lam.dot(r);

    let tol = opts.tolerance * set.beq.amax().max(1.0);
    let mut last = f64::INFINITY;
    for _ in 0..opts.newton_iterations {
        let (w, x) = primal(&lam);
        let r = residual(&x);
        let rn = r.amax();
        last = rn;
        if rn <= tol {
            warm.dual = Some(lam);
            return Ok(x);
        }
        let r0 = r.norm();
        let f0 = dual_value(&lam, &x, &r);
        let mut accepted = false;
        // Later attempts treat components sitting near a bound kink as free.
        for margin in [0.0, 1e-9, 1e-7, 1e-5] {
            let d = newton_direction(set, cols, &w, &r, rn, margin)?;
            let slope = r.dot(&d);
            // Once the predicted ascent drops below the rounding level of the dual
            // value, the Armijo test is noise; judge steps by the residual instead.
            let noisy = slope <= 1e3 * f64::EPSILON * f0.abs().max(1.0);
            let mut t = 1.0;
            while t >= 1e-12 {
                let trial = &lam + t * &d;
                let (_, xt) = primal(&trial);
                let rt = residual(&xt);
                let ok = if noisy {
                    rt.norm() < (1.0 - 1e-4 * t) * r0
                } else {
                    dual_value(&trial, &xt, &rt) >= f0 + 1e-4 * t * slope
                };
                if ok {
                    lam = trial;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if accepted {
                break;
            }
        }
        if !accepted {
            break;
        }
    }
    warm.dual = Some(lam);
    Err(Error::ProjectionBudgetExceeded { residual: last })
}

/// Regularized semismooth Newton direction on the free components of `w`.
fn newton_direction(
    set: &AffineBoxSet,
    cols: &[Vec<(usize, f64)>],
    w: &DVector<f64>,
    r: &DVector<f64>,
    rn: f64,
    margin: f64,
) -> Result<DVector<f64>> {
    let p = r.len();
    let mut h = DMatrix::<f64>::zeros(p, p);
    for (k, col) in cols.iter().enumerate() {
        let (lower, upper) = (set.bounds.lower[k], set.bounds.upper[k]);
        let lo = if margin > 0.0 { lower - margin * lower.abs().max(1.0) } else { lower };
        let hi = if margin > 0.0 { upper + margin * upper.abs().max(1.0) } else { upper };
        if w[k] > lo && w[k] < hi {
            for &(r1, v1) in col {
                for &(r2, v2) in col {
                    h[(r1, r2)] += v1 * v2;
                }
            }
        }
    }
    let scale = (0..p).map(|i| h[(i, i)]).fold(0.0, f64::max).max(1.0);
    let mut mu = 1e-10 * scale * rn.min(1.0).max(1e-6);
    loop {
        let mut hm = h.clone();
        for i in 0..p {
            hm[(i, i)] += mu;
        }
        if let Some(ch) = hm.cholesky() {
            return Ok(ch.solve(r));
        }
        mu = (mu * 100.0).max(1e-12 * scale);
        if mu > scale {
            return Err(Error::ProjectionBudgetExceeded { residual: rn });
        }
    }
}

/// Dykstra between the affine subspace and the box.
fn dykstra_affine_box(set: &AffineBoxSet, v: &DVector<f64>, opts: &ProjectionOptions) -> Result<DVector<f64>> {
    let mut x = v.clone();
    let mut pa = DVector::zeros(v.len());
    let mut pb = DVector::zeros(v.len());
    let mut last = f64::INFINITY;
    for _ in 0..opts.sweeps {
        let y = set.project_affine(&(&x + &pa));
        pa = &x + &pa - &y;
        let xn = set.bounds.clamp(&(&y + &pb));
        pb = &y + &pb - &xn;
        let change = (&xn - &x).amax();
        x = xn;
        last = set.equality_residual(&x);
        if change <= opts.tolerance && last <= opts.tolerance {
            return Ok(x);
        }
    }
    Err(Error::ProjectionBudgetExceeded { residual: last })
}

fn project_with_ellipsoid(
    set: &AffineBoxSet,
    ellipsoid: &Ellipsoid,
    v: &DVector<f64>,
    opts: &ProjectionOptions,
    warm: &mut ProjectionWarmStart,
) -> Result<DVector<f64>> {
    let first = project_affine_box(set, v, opts, warm)?;
    if ellipsoid.excess(&first) <= 0.0 {
        return Ok(first);
    }
    let mut x = v.clone();
    let mut pa = DVector::zeros(v.len());
    let mut pe = DVector::zeros(v.len());
    let mut last = f64::INFINITY;
    for _ in 0..opts.sweeps {
        let y = project_affine_box(set, &(&x + &pa), opts, warm)?;
        pa = &x + &pa - &y;
        let xn = ellipsoid.project(&(&y + &pe));
        pe = &y + &pe - &xn;
        let gap = (&xn - &y).amax();
        x = xn;
        last = gap.max(ellipsoid.excess(&y));
        if gap <= opts.tolerance && ellipsoid.excess(&y) <= opts.tolerance {
            return Ok(y);
        }
    }
    Err(Error::ProjectionBudgetExceeded { residual: last })
}

/// Dual active-set projection onto `{x : Gx ≤ h}`.
fn project_polytope(set: &PolytopeSet, v: &DVector<f64>, tol: f64) -> Result<DVector<f64>> {
    let g = &set.g;
    let m = g.nrows();
    let n = g.ncols();
    let mut x = v.clone();
    let mut active: Vec<usize> = Vec::new();
    let mut mult: Vec<f64> = Vec::new();
    let row = |j: usize| -> DVector<f64> { g.row(j).transpose() };
    let scale = set.h.amax().max(1.0);
    for _ in 0..(20 * m + 20) {
        let s = g * &x - &set.h;
        let (p, worst) = s.iter().enumerate().fold((0, f64::NEG_INFINITY), |acc, (j, &sj)| {
            if sj > acc.1 && !active.contains(&j) {
                (j, sj)
            } else {
                acc
            }
        });
        if m == 0 || worst <= tol * scale {
            return Ok(x);
        }
        let cp = row(p);
        let mut up = 0.0;
        for _ in 0..(m + 2) {
            let k = active.len();
            let r = if k == 0 {
                DVector::zeros(0)
            } else {
                let ca = DMatrix::from_fn(k, n, |i, c| g[(active[i], c)]);
                let gram = &ca * ca.transpose();
                let rhs = &ca * &cp;
                match gram.clone().cholesky() {
                    Some(ch) => ch.solve(&rhs),
                    None => gram
                        .pseudo_inverse(1e-14)
                        .map_err(|e| Error::InvalidParameter(e.to_string()))?
                        * rhs,
                }
            };
            let mut z = cp.clone();
            for (i, &j) in active.iter().enumerate() {
                z -= r[i] * row(j);
            }
            let zz = z.dot(&cp);
            let mut t1 = f64::INFINITY;
            let mut block = None;
            for i in 0..k {
                if r[i] > 1e-14 {
                    let ratio = mult[i] / r[i];
                    if ratio < t1 {
                        t1 = ratio;
                        block = Some(i);
                    }
                }
            }
            let sp = cp.dot(&x) - set.h[p];
            let t2 = if zz > 1e-14 * cp.norm_squared() { sp / zz } else { f64::INFINITY };
            if !t1.is_finite() && !t2.is_finite() {
                return Err(Error::Infeasible("polytope is empty".into()));
            }
            let t = t1.min(t2);
            if t2.is_finite() {
                x -= t * &z;
            }
            for i in 0..k {
                mult[i] -= t * r[i];
            }
            up += t;
            if t2 <= t1 {
                active.push(p);
                mult.push(up);
                break;
            }
            let b = block.expect("finite partial step has a blocking constraint");
            active.remove(b);
            mult.remove(b);
        }
    }
    let residual = (g * &x - &set.h).iter().cloned().fold(0.0, f64::max);
    Err(Error::ProjectionBudgetExceeded { residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn box_clamp() {
        let set = LocalConstraintSet::boxed(DVector::from_element(2, -1.0), DVector::from_element(2, 1.0)).unwrap();
        let y = project(&set, &DVector::from_vec(vec![2.0, 0.5]), &ProjectionOptions::default()).unwrap();
        assert_eq!(y, DVector::from_vec(vec![1.0, 0.5]));
    }

    #[test]
    fn polytope_matches_clamp_for_box_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 0.0, 1.0, -1.0, 0.0, 0.0, -1.0]);
        let h = DVector::from_vec(vec![1.0, 2.0, 0.5, 1.0]);
        let set = LocalConstraintSet::polytope(g, h).unwrap();
        for _ in 0..200 {
            let v = DVector::from_fn(2, |_, _| rng.random_range(-4.0..4.0));
            let y = project(&set, &v, &ProjectionOptions::default()).unwrap();
            let e = DVector::from_vec(vec![v[0].clamp(-0.5, 1.0), v[1].clamp(-1.0, 2.0)]);
            assert!((y - e).amax() < 1e-12);
        }
    }

    #[test]
    fn newton_and_dykstra_agree() {
        let a = DMatrix::from_row_slice(1, 3, &[1.0, 1.0, 1.0]);
        let set = AffineBoxSet::new(a, DVector::from_element(1, 1.0), DVector::zeros(3), DVector::from_element(3, 0.8))
            .unwrap();
        let set = LocalConstraintSet::AffineIntersectBox(set);
        let v = DVector::from_vec(vec![2.0, -1.0, 0.3]);
        let n = project(&set, &v, &ProjectionOptions::default()).unwrap();
        let d = project(&set, &v, &ProjectionOptions { method: AffineMethod::Dykstra, sweeps: 20000, ..Default::default() })
            .unwrap();
        assert!((&n - &d).amax() < 1e-7);
        assert!((n.sum() - 1.0).abs() < 1e-9);
    }
}
