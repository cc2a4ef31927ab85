//! Centralized reference solver backed by the Clarabel interior-point method.
//!
//! Used for non-emptiness checks, ground-truth optima and sub-optimality
//! measurements. It never takes part in the distributed message exchange.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{DefaultSettings, DefaultSolver, IPSolver, SolverStatus, SupportedConeT};
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::netqp::{AffineBoxSet, DistributedProblem, Ellipsoid, LocalConstraintSet, Parameter};

#[derive(Default)]
struct Rows {
    eq: Vec<(Vec<(usize, f64)>, f64)>,
    ineq: Vec<(Vec<(usize, f64)>, f64)>,
    soc: Vec<Vec<(Vec<(usize, f64)>, f64)>>,
}

impl Rows {
    fn add_box(&mut self, offset: usize, lower: &DVector<f64>, upper: &DVector<f64>) {
        for k in 0..lower.len() {
            if upper[k].is_finite() {
                self.ineq.push((vec![(offset + k, 1.0)], upper[k]));
            }
            if lower[k].is_finite() {
                self.ineq.push((vec![(offset + k, -1.0)], -lower[k]));
            }
        }
    }

    fn add_affine(&mut self, offset: usize, a: &AffineBoxSet) {
        for r in 0..a.aeq.nrows() {
            let row = (0..a.aeq.ncols())
                .filter(|&c| a.aeq[(r, c)] != 0.0)
                .map(|c| (offset + c, a.aeq[(r, c)]))
                .collect();
            self.eq.push((row, a.beq[r]));
        }
        self.add_box(offset, &a.bounds.lower, &a.bounds.upper);
    }

    fn add_ellipsoid(&mut self, offset: usize, e: &Ellipsoid) -> Result<()> {
        let chol = e
            .shape
            .clone()
            .cholesky()
            .ok_or_else(|| Error::OracleFailure("ellipsoid shape is not positive definite".into()))?;
        let lt = chol.l().transpose();
        let lc = &lt * &e.center;
        let mut cone = vec![(Vec::new(), e.level.sqrt())];
        for r in 0..lt.nrows() {
            let row = (0..lt.ncols())
                .filter(|&c| lt[(r, c)] != 0.0)
                .map(|c| (offset + e.coords[c], -lt[(r, c)]))
                .collect();
            cone.push((row, -lc[r]));
        }
        self.soc.push(cone);
        Ok(())
    }

    fn add_set(&mut self, offset: usize, set: &LocalConstraintSet) -> Result<()> {
        match set {
            LocalConstraintSet::Box(b) => self.add_box(offset, &b.lower, &b.upper),
            LocalConstraintSet::Polytope(p) => {
                for r in 0..p.g.nrows() {
                    let row = (0..p.g.ncols())
                        .filter(|&c| p.g[(r, c)] != 0.0)
                        .map(|c| (offset + c, p.g[(r, c)]))
                        .collect();
                    self.ineq.push((row, p.h[r]));
                }
            }
            LocalConstraintSet::AffineIntersectBox(a) => self.add_affine(offset, a),
            LocalConstraintSet::AffineBoxEllipsoid(a, e) => {
                self.add_affine(offset, a);
                self.add_ellipsoid(offset, e)?;
            }
        }
        Ok(())
    }

    fn assemble(self, n: usize) -> (CscMatrix<f64>, Vec<f64>, Vec<SupportedConeT<f64>>) {
        let (mut ii, mut jj, mut vv, mut b) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        let mut cones = Vec::new();
        let mut push = |rows: Vec<(Vec<(usize, f64)>, f64)>, b: &mut Vec<f64>| {
            for (row, rhs) in rows {
                let r = b.len();
                for (c, v) in row {
                    ii.push(r);
                    jj.push(c);
                    vv.push(v);
                }
                b.push(rhs);
            }
        };
        if !self.eq.is_empty() {
            cones.push(SupportedConeT::ZeroConeT(self.eq.len()));
            push(self.eq, &mut b);
        }
        if !self.ineq.is_empty() {
            cones.push(SupportedConeT::NonnegativeConeT(self.ineq.len()));
            push(self.ineq, &mut b);
        }
        for cone in self.soc {
            cones.push(SupportedConeT::SecondOrderConeT(cone.len()));
            push(cone, &mut b);
        }
        let m = b.len();
        (CscMatrix::new_from_triplets(m, n, ii, jj, vv), b, cones)
    }
}

fn settings() -> DefaultSettings<f64> {
    DefaultSettings {
        verbose: false,
        tol_gap_abs: 1e-11,
        tol_gap_rel: 1e-11,
        tol_feas: 1e-11,
        tol_ktratio: 1e-9,
        max_iter: 400,
        ..DefaultSettings::default()
    }
}

fn upper_triangle(p: &DMatrix<f64>) -> CscMatrix<f64> {
    let n = p.nrows();
    let (mut ii, mut jj, mut vv) = (Vec::new(), Vec::new(), Vec::new());
    for c in 0..n {
        for r in 0..=c {
            let v = 0.5 * (p[(r, c)] + p[(c, r)]);
            if v != 0.0 {
                ii.push(r);
                jj.push(c);
                vv.push(v);
            }
        }
    }
    CscMatrix::new_from_triplets(n, n, ii, jj, vv)
}

/// Minimize `½xᵀPx + qᵀx` subject to constraint sets placed at the given offsets.
pub fn solve_qp(p: &DMatrix<f64>, q: &DVector<f64>, blocks: &[(usize, &LocalConstraintSet)]) -> Result<DVector<f64>> {
    let n = q.len();
    if p.nrows() != n || p.ncols() != n {
        return Err(Error::DimensionMismatch("oracle Hessian and linear term disagree".into()));
    }
    let mut rows = Rows::default();
    for (offset, set) in blocks {
        if offset + set.dim() > n {
            return Err(Error::DimensionMismatch("constraint block exceeds the variable".into()));
        }
        rows.add_set(*offset, set)?;
    }
    let (a, b, cones) = rows.assemble(n);
    let mut solver = DefaultSolver::new(&upper_triangle(p), q.as_slice(), &a, &b, &cones, settings())
        .map_err(|e| Error::OracleFailure(e.to_string()))?;
    solver.solve();
    match solver.solution.status {
        SolverStatus::Solved | SolverStatus::AlmostSolved => Ok(DVector::from_vec(solver.solution.x.clone())),
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
            Err(Error::Infeasible("oracle reports an empty feasible set".into()))
        }
        s => Err(Error::OracleFailure(format!("solver stopped with status {s:?}"))),
    }
}

/// Feasibility check of one constraint set.
pub fn is_nonempty(set: &LocalConstraintSet) -> Result<bool> {
    if let LocalConstraintSet::Box(b) = set {
        return Ok((0..b.dim()).all(|k| b.lower[k] <= b.upper[k]));
    }
    let n = set.dim();
    let p = DMatrix::zeros(n, n);
    let q = DVector::zeros(n);
    match solve_qp(&p, &q, &[(0, set)]) {
        Ok(_) => Ok(true),
        Err(Error::Infeasible(_)) => Ok(false),
        Err(e) => Err(e),
    }
}

/// Centralized optimum `z*(ζ)` of a distributed problem.
pub fn solve_centralized(problem: &DistributedProblem, zeta: &Parameter) -> Result<DVector<f64>> {
    let p = 2.0 * problem.global_hessian();
    let q = problem.global_linear(zeta)?;
    let sel = problem.selectors();
    let blocks: Vec<_> = (0..problem.agent_count())
        .map(|i| (sel.global_range(i).start, problem.constraint(i)))
        .collect();
    solve_qp(&p, &q, &blocks)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_qp_matches_clamp() {
        let p = DMatrix::identity(2, 2);
        let q = DVector::from_vec(vec![-3.0, 0.2]);
        let set = LocalConstraintSet::boxed(DVector::from_element(2, -1.0), DVector::from_element(2, 1.0)).unwrap();
        let x = solve_qp(&p, &q, &[(0, &set)]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-8 && (x[1] + 0.2).abs() < 1e-8);
    }

    #[test]
    fn detects_empty_polytope() {
        let g = DMatrix::from_row_slice(2, 1, &[1.0, -1.0]);
        let h = DVector::from_vec(vec![-1.0, -1.0]);
        let set = LocalConstraintSet::polytope(g, h).unwrap();
        assert!(!is_nonempty(&set).unwrap());
    }
}
