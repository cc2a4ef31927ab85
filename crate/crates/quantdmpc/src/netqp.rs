//! Graph-structured parametric QP: per-agent quadratic costs over neighbourhood
//! variables plus local convex constraint sets.
//!
//! Agent `i` owns `z_i ∈ ℝ^{m_i}` and its cost depends on the neighbourhood stack
//! `z_{N_i}`, ordered as the agent's own block first followed by its neighbours in
//! ascending index order. Costs are stored as `zᵀHz + cᵀz` with gradient `2Hz + c`,
//! and every Lipschitz or convexity constant reported here is computed from `2H`.
//! Agents are indexed from zero in the API and from one in config files.

use std::collections::VecDeque;
use std::ops::Range;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::linalg;

/// Undirected communication graph without self-loops.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    vertex_count: usize,
    edges: Vec<(usize, usize)>,
    neighbors: Vec<Vec<usize>>,
}

impl Graph {
    /// Zero-indexed edge list; duplicates and reversed pairs are merged.
    pub fn new(vertex_count: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if vertex_count == 0 {
            return Err(Error::InvalidGraph("graph needs at least one vertex".into()));
        }
        let mut norm = Vec::with_capacity(edges.len());
        for &(a, b) in edges {
            if a == b {
                return Err(Error::InvalidGraph(format!("self-loop at vertex {a}")));
            }
            if a >= vertex_count || b >= vertex_count {
                return Err(Error::InvalidGraph(format!("edge ({a}, {b}) references a missing vertex")));
            }
            norm.push((a.min(b), a.max(b)));
        }
        norm.sort_unstable();
        norm.dedup();
        let mut neighbors = vec![Vec::new(); vertex_count];
        for &(a, b) in &norm {
            neighbors[a].push(b);
            neighbors[b].push(a);
        }
        for n in &mut neighbors {
            n.sort_unstable();
        }
        Ok(Self { vertex_count, edges: norm, neighbors })
    }

    /// One-indexed edge list, as written in config files.
    pub fn from_one_indexed(vertex_count: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut zero = Vec::with_capacity(edges.len());
        for &(a, b) in edges {
            if a == 0 || b == 0 {
                return Err(Error::InvalidGraph("one-indexed edges cannot use vertex 0".into()));
            }
            zero.push((a - 1, b - 1));
        }
        Self::new(vertex_count, &zero)
    }

    /// Simple path `0 - 1 - … - (M-1)`.
    pub fn path(vertex_count: usize) -> Result<Self> {
        let edges: Vec<_> = (1..vertex_count).map(|i| (i - 1, i)).collect();
        Self::new(vertex_count, &edges)
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    /// Normalized edges `(i, j)` with `i < j`.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Neighbours of `i`, excluding `i`, ascending.
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    /// `i` followed by its neighbours in ascending order.
    pub fn closed_neighborhood(&self, i: usize) -> Vec<usize> {
        let mut v = Vec::with_capacity(self.neighbors[i].len() + 1);
        v.push(i);
        v.extend_from_slice(&self.neighbors[i]);
        v
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.neighbors[i].binary_search(&j).is_ok()
    }

    /// Largest neighbour count. Zero only for the single-vertex graph.
    pub fn degree(&self) -> usize {
        self.neighbors.iter().map(|n| n.len()).max().unwrap_or(0)
    }

    pub fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.vertex_count];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(v) = queue.pop_front() {
            for &w in &self.neighbors[v] {
                if !seen[w] {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }
}

/// Index bookkeeping between the global stack `z` and each neighbourhood stack `z_{N_i}`.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionMaps {
    sizes: Vec<usize>,
    offsets: Vec<usize>,
    members: Vec<Vec<usize>>,
    local_offsets: Vec<Vec<usize>>,
}

impl SelectionMaps {
    pub fn new(graph: &Graph, sizes: &[usize]) -> Result<Self> {
        if sizes.len() != graph.vertex_count() {
            return Err(Error::DimensionMismatch(format!(
                "{} agent sizes for {} vertices",
                sizes.len(),
                graph.vertex_count()
            )));
        }
        let mut offsets = Vec::with_capacity(sizes.len());
        let mut at = 0;
        for &s in sizes {
            offsets.push(at);
            at += s;
        }
        let members: Vec<Vec<usize>> = (0..sizes.len()).map(|i| graph.closed_neighborhood(i)).collect();
        let local_offsets = members
            .iter()
            .map(|m| {
                let mut at = 0;
                m.iter()
                    .map(|&j| {
                        let o = at;
                        at += sizes[j];
                        o
                    })
                    .collect()
            })
            .collect();
        Ok(Self { sizes: sizes.to_vec(), offsets, members, local_offsets })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn global_dim(&self) -> usize {
        self.sizes.iter().sum()
    }

    /// Global index range of `z_i`.
    pub fn global_range(&self, i: usize) -> Range<usize> {
        self.offsets[i]..self.offsets[i] + self.sizes[i]
    }

    /// Agents stacked in `z_{N_i}`, own index first.
    pub fn members(&self, i: usize) -> &[usize] {
        &self.members[i]
    }

    pub fn neighborhood_dim(&self, i: usize) -> usize {
        self.members[i].iter().map(|&j| self.sizes[j]).sum()
    }

    /// `E_i` as a list of global indices.
    pub fn e_indices(&self, i: usize) -> Vec<usize> {
        self.members[i].iter().flat_map(|&j| self.global_range(j)).collect()
    }

    /// `F_ji`: where `z_i` sits inside `z_{N_j}`, if `i` belongs to that neighbourhood.
    pub fn f_range(&self, j: usize, i: usize) -> Option<Range<usize>> {
        let pos = self.members[j].iter().position(|&m| m == i)?;
        let o = self.local_offsets[j][pos];
        Some(o..o + self.sizes[i])
    }

    /// `E_i z`.
    pub fn gather(&self, i: usize, z: &DVector<f64>) -> DVector<f64> {
        let idx = self.e_indices(i);
        DVector::from_iterator(idx.len(), idx.iter().map(|&k| z[k]))
    }

    /// Stack per-agent blocks into `z_{N_i}`.
    pub fn gather_blocks(&self, i: usize, blocks: &[DVector<f64>]) -> DVector<f64> {
        let parts: Vec<_> = self.members[i].iter().map(|&j| blocks[j].clone()).collect();
        linalg::concat(&parts)
    }

    /// `E_iᵀ v`.
    pub fn lift(&self, i: usize, local: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.global_dim());
        for (k, g) in self.e_indices(i).into_iter().enumerate() {
            out[g] += local[k];
        }
        out
    }

    /// Split a global vector into agent blocks.
    pub fn split(&self, z: &DVector<f64>) -> Vec<DVector<f64>> {
        linalg::split(z, &self.sizes)
    }
}

/// `f_i(z_{N_i}; ζ_i) = z_{N_i}ᵀ H_i z_{N_i} + (h_iᵀ ζ_i + c_i)ᵀ z_{N_i}`.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalCost {
    pub hessian: DMatrix<f64>,
    /// `h_i`, one row per parameter component.
    pub param_map: DMatrix<f64>,
    /// Parameter-independent linear term `c_i`.
    pub offset: DVector<f64>,
}

impl LocalCost {
    pub fn new(hessian: DMatrix<f64>, param_map: DMatrix<f64>, offset: DVector<f64>) -> Result<Self> {
        let n = hessian.nrows();
        if !hessian.is_square() || param_map.ncols() != n || offset.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "cost blocks disagree: H {}x{}, h {}x{}, c {}",
                hessian.nrows(),
                hessian.ncols(),
                param_map.nrows(),
                param_map.ncols(),
                offset.len()
            )));
        }
        if !linalg::is_symmetric(&hessian, 1e-12) {
            return Err(Error::InvalidParameter("local Hessian is not symmetric".into()));
        }
        Ok(Self { hessian, param_map, offset })
    }

    /// Pure quadratic with no parameter dependence.
    pub fn quadratic(hessian: DMatrix<f64>) -> Result<Self> {
        let n = hessian.nrows();
        Self::new(hessian, DMatrix::zeros(0, n), DVector::zeros(n))
    }

    pub fn dim(&self) -> usize {
        self.hessian.nrows()
    }

    pub fn param_dim(&self) -> usize {
        self.param_map.nrows()
    }

    pub fn linear_term(&self, zeta: &DVector<f64>) -> DVector<f64> {
        self.param_map.tr_mul(zeta) + &self.offset
    }

    pub fn value(&self, z: &DVector<f64>, zeta: &DVector<f64>) -> f64 {
        z.dot(&(&self.hessian * z)) + self.linear_term(zeta).dot(z)
    }

    pub fn gradient(&self, z: &DVector<f64>, zeta: &DVector<f64>) -> DVector<f64> {
        2.0 * (&self.hessian * z) + self.linear_term(zeta)
    }
}

/// `{x : lower ≤ x ≤ upper}`; infinite bounds allowed.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxSet {
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
}

/// `{x : G x ≤ h}`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolytopeSet {
    pub g: DMatrix<f64>,
    pub h: DVector<f64>,
}

/// `{x : A x = b, lower ≤ x ≤ upper}` with a cached pseudo-inverse of `A`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineBoxSet {
    pub aeq: DMatrix<f64>,
    pub beq: DVector<f64>,
    pub bounds: BoxSet,
    pinv: DMatrix<f64>,
    columns: Vec<Vec<(usize, f64)>>,
}

/// `{x : (x_S − c)ᵀ P (x_S − c) ≤ α}` acting on the coordinates `S`.
#[derive(Debug, Clone, PartialEq)]
pub struct Ellipsoid {
    pub coords: Vec<usize>,
    pub center: DVector<f64>,
    pub shape: DMatrix<f64>,
    pub level: f64,
    eigvecs: DMatrix<f64>,
    eigvals: DVector<f64>,
}

/// Local constraint set `C_i`.
#[derive(Debug, Clone, PartialEq)]
pub enum LocalConstraintSet {
    Box(BoxSet),
    Polytope(PolytopeSet),
    AffineIntersectBox(AffineBoxSet),
    AffineBoxEllipsoid(AffineBoxSet, Ellipsoid),
}

impl BoxSet {
    pub fn new(lower: DVector<f64>, upper: DVector<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch("box bounds differ in length".into()));
        }
        if lower.iter().chain(upper.iter()).any(|v| v.is_nan()) {
            return Err(Error::NonFiniteInput);
        }
        Ok(Self { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn violation(&self, x: &DVector<f64>) -> f64 {
        let mut v: f64 = 0.0;
        for k in 0..x.len() {
            v = v.max(self.lower[k] - x[k]).max(x[k] - self.upper[k]);
        }
        v
    }

    pub fn clamp(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(x.len(), (0..x.len()).map(|k| x[k].max(self.lower[k]).min(self.upper[k])))
    }
}

impl AffineBoxSet {
    pub fn new(aeq: DMatrix<f64>, beq: DVector<f64>, lower: DVector<f64>, upper: DVector<f64>) -> Result<Self> {
        if aeq.nrows() != beq.len() || aeq.ncols() != lower.len() {
            return Err(Error::DimensionMismatch(format!(
                "equality system {}x{} with rhs {} and {} bounds",
                aeq.nrows(),
                aeq.ncols(),
                beq.len(),
                lower.len()
            )));
        }
        let bounds = BoxSet::new(lower, upper)?;
        let pinv = if aeq.nrows() == 0 {
            DMatrix::zeros(aeq.ncols(), 0)
        } else {
            aeq.clone()
                .pseudo_inverse(1e-12 * aeq.amax().max(1.0))
                .map_err(|e| Error::InvalidParameter(e.to_string()))?
        };
        let columns = (0..aeq.ncols())
            .map(|c| (0..aeq.nrows()).filter(|&r| aeq[(r, c)] != 0.0).map(|r| (r, aeq[(r, c)])).collect())
            .collect();
        Ok(Self { aeq, beq, bounds, pinv, columns })
    }

    pub fn dim(&self) -> usize {
        self.aeq.ncols()
    }

    /// Nonzeros of each column of `A` as `(row, value)` pairs.
    pub fn sparse_columns(&self) -> &[Vec<(usize, f64)>] {
        &self.columns
    }

    /// Euclidean projection onto the affine subspace alone.
    pub fn project_affine(&self, v: &DVector<f64>) -> DVector<f64> {
        if self.aeq.nrows() == 0 {
            return v.clone();
        }
        let r = &self.aeq * v - &self.beq;
        v - &self.pinv * r
    }

    pub fn equality_residual(&self, x: &DVector<f64>) -> f64 {
        if self.aeq.nrows() == 0 {
            return 0.0;
        }
        (&self.aeq * x - &self.beq).amax()
    }

    pub fn violation(&self, x: &DVector<f64>) -> f64 {
        self.equality_residual(x).max(self.bounds.violation(x))
    }
}

impl Ellipsoid {
    pub fn new(coords: Vec<usize>, center: DVector<f64>, shape: DMatrix<f64>, level: f64) -> Result<Self> {
        let k = coords.len();
        if center.len() != k || shape.nrows() != k || shape.ncols() != k {
            return Err(Error::DimensionMismatch("ellipsoid blocks disagree".into()));
        }
        if !(level >= 0.0) || !level.is_finite() {
            return Err(Error::InvalidParameter("ellipsoid level must be finite and non-negative".into()));
        }
        if !linalg::is_symmetric(&shape, 1e-10) {
            return Err(Error::InvalidParameter("ellipsoid shape must be symmetric".into()));
        }
        let eig = SymmetricEigen::new(shape.clone());
        if eig.eigenvalues.iter().any(|&l| l <= 0.0) {
            return Err(Error::InvalidParameter("ellipsoid shape must be positive definite".into()));
        }
        Ok(Self { coords, center, shape, level, eigvecs: eig.eigenvectors, eigvals: eig.eigenvalues })
    }

    fn select(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.coords.len(), self.coords.iter().map(|&c| x[c]))
    }

    /// `(x_S − c)ᵀ P (x_S − c) − α`, positive when outside.
    pub fn excess(&self, x: &DVector<f64>) -> f64 {
        let d = self.select(x) - &self.center;
        d.dot(&(&self.shape * &d)) - self.level
    }

    /// Exact Euclidean projection (secular equation on the eigenbasis of `P`).
    pub fn project(&self, x: &DVector<f64>) -> DVector<f64> {
        if self.excess(x) <= 0.0 {
            return x.clone();
        }
        let s = self.eigvecs.tr_mul(&(self.select(x) - &self.center));
        let lam = &self.eigvals;
        let g = |theta: f64| -> f64 {
            (0..s.len()).map(|k| lam[k] * (s[k] / (1.0 + theta * lam[k])).powi(2)).sum::<f64>() - self.level
        };
        let mut hi = 1.0 / lam.min();
        while g(hi) > 0.0 {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-15 * hi {
                break;
            }
        }
        let y = DVector::from_iterator(s.len(), (0..s.len()).map(|k| s[k] / (1.0 + hi * lam[k])));
        let local = &self.center + &self.eigvecs * y;
        let mut out = x.clone();
        for (k, &c) in self.coords.iter().enumerate() {
            out[c] = local[k];
        }
        out
    }
}

impl LocalConstraintSet {
    pub fn boxed(lower: DVector<f64>, upper: DVector<f64>) -> Result<Self> {
        Ok(Self::Box(BoxSet::new(lower, upper)?))
    }

    pub fn polytope(g: DMatrix<f64>, h: DVector<f64>) -> Result<Self> {
        if g.nrows() != h.len() {
            return Err(Error::DimensionMismatch("polytope rows and rhs differ".into()));
        }
        Ok(Self::Polytope(PolytopeSet { g, h }))
    }

    pub fn affine_box(aeq: DMatrix<f64>, beq: DVector<f64>, lower: DVector<f64>, upper: DVector<f64>) -> Result<Self> {
        Ok(Self::AffineIntersectBox(AffineBoxSet::new(aeq, beq, lower, upper)?))
    }

    pub fn affine_box_ellipsoid(affine: AffineBoxSet, ellipsoid: Ellipsoid) -> Result<Self> {
        if ellipsoid.coords.iter().any(|&c| c >= affine.dim()) {
            return Err(Error::DimensionMismatch("ellipsoid coordinate out of range".into()));
        }
        Ok(Self::AffineBoxEllipsoid(affine, ellipsoid))
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Box(b) => b.dim(),
            Self::Polytope(p) => p.g.ncols(),
            Self::AffineIntersectBox(a) => a.dim(),
            Self::AffineBoxEllipsoid(a, _) => a.dim(),
        }
    }

    /// Largest constraint violation at `x` (zero inside).
    pub fn violation(&self, x: &DVector<f64>) -> f64 {
        match self {
            Self::Box(b) => b.violation(x),
            Self::Polytope(p) => (&p.g * x - &p.h).iter().cloned().fold(0.0, f64::max),
            Self::AffineIntersectBox(a) => a.violation(x),
            Self::AffineBoxEllipsoid(a, e) => a.violation(x).max(e.excess(x).max(0.0)),
        }
    }

    /// Replace the right-hand side of the equality system.
    pub fn set_equality_rhs(&mut self, beq: DVector<f64>) -> Result<()> {
        match self {
            Self::AffineIntersectBox(a) | Self::AffineBoxEllipsoid(a, _) => {
                if beq.len() != a.beq.len() {
                    return Err(Error::DimensionMismatch("equality rhs length changed".into()));
                }
                a.beq = beq;
                Ok(())
            }
            _ => Err(Error::InvalidParameter("set has no equality constraints".into())),
        }
    }

    /// Recenter the ellipsoid, if any.
    pub fn set_ellipsoid_center(&mut self, center: DVector<f64>) -> Result<()> {
        match self {
            Self::AffineBoxEllipsoid(_, e) if e.center.len() == center.len() => {
                e.center = center;
                Ok(())
            }
            Self::AffineBoxEllipsoid(..) => Err(Error::DimensionMismatch("ellipsoid center length changed".into())),
            _ => Err(Error::InvalidParameter("set has no ellipsoid".into())),
        }
    }
}

/// Per-agent parameters `ζ_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter(pub Vec<DVector<f64>>);

impl Parameter {
    /// Empty parameters for costs without parameter dependence.
    pub fn empty(agents: usize) -> Self {
        Self(vec![DVector::zeros(0); agents])
    }
}

/// Constants of the assembled problem, all taken from `2H`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvexityMetadata {
    pub lipschitz: f64,
    pub lipschitz_max: f64,
    pub strong_convexity: f64,
    pub gamma: f64,
}

/// The assembled distributed problem.
#[derive(Debug, Clone)]
pub struct DistributedProblem {
    graph: Graph,
    selectors: SelectionMaps,
    costs: Vec<LocalCost>,
    constraints: Vec<LocalConstraintSet>,
    hessian: DMatrix<f64>,
    metadata: ConvexityMetadata,
}

impl DistributedProblem {
    /// Validate dimensions, assemble the global Hessian, check strong convexity
    /// and non-emptiness of every constraint set.
    pub fn build(graph: Graph, costs: Vec<LocalCost>, constraints: Vec<LocalConstraintSet>) -> Result<Self> {
        let m = graph.vertex_count();
        if costs.len() != m || constraints.len() != m {
            return Err(Error::DimensionMismatch(format!(
                "{m} agents but {} costs and {} constraint sets",
                costs.len(),
                constraints.len()
            )));
        }
        if !graph.is_connected() {
            return Err(Error::DisconnectedGraph);
        }
        let sizes: Vec<usize> = constraints.iter().map(|c| c.dim()).collect();
        let selectors = SelectionMaps::new(&graph, &sizes)?;
        for (i, c) in costs.iter().enumerate() {
            if c.dim() != selectors.neighborhood_dim(i) {
                return Err(Error::DimensionMismatch(format!(
                    "agent {i}: cost acts on {} coordinates, neighbourhood has {}",
                    c.dim(),
                    selectors.neighborhood_dim(i)
                )));
            }
        }
        let n = selectors.global_dim();
        let mut hessian = DMatrix::zeros(n, n);
        for (i, c) in costs.iter().enumerate() {
            let idx = selectors.e_indices(i);
            for (a, &ga) in idx.iter().enumerate() {
                for (b, &gb) in idx.iter().enumerate() {
                    hessian[(ga, gb)] += c.hessian[(a, b)];
                }
            }
        }
        let (min, max) = linalg::symmetric_extremes(&(2.0 * &hessian));
        if !(min > 0.0) {
            return Err(Error::NotStronglyConvex { min_eigenvalue: min });
        }
        let lipschitz_max = costs
            .iter()
            .map(|c| linalg::symmetric_extremes(&(2.0 * &c.hessian)).1)
            .fold(0.0, f64::max);
        let metadata = ConvexityMetadata {
            lipschitz: max,
            lipschitz_max,
            strong_convexity: min,
            gamma: (min / max).min(1.0),
        };
        for (i, c) in constraints.iter().enumerate() {
            if !crate::oracle::is_nonempty(c)? {
                return Err(Error::EmptyConstraintSet { agent: i });
            }
        }
        Ok(Self { graph, selectors, costs, constraints, hessian, metadata })
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn selectors(&self) -> &SelectionMaps {
        &self.selectors
    }

    pub fn agent_count(&self) -> usize {
        self.graph.vertex_count()
    }

    pub fn sizes(&self) -> &[usize] {
        self.selectors.sizes()
    }

    pub fn max_local_dim(&self) -> usize {
        self.sizes().iter().cloned().max().unwrap_or(0)
    }

    pub fn dim(&self) -> usize {
        self.selectors.global_dim()
    }

    pub fn cost(&self, i: usize) -> &LocalCost {
        &self.costs[i]
    }

    pub fn constraint(&self, i: usize) -> &LocalConstraintSet {
        &self.constraints[i]
    }

    pub fn constraints(&self) -> &[LocalConstraintSet] {
        &self.constraints
    }

    pub fn constraint_mut(&mut self, i: usize) -> &mut LocalConstraintSet {
        &mut self.constraints[i]
    }

    /// Global `H` with `f(z) = zᵀHz + c(ζ)ᵀz`.
    pub fn global_hessian(&self) -> &DMatrix<f64> {
        &self.hessian
    }

    pub fn convexity_metadata(&self) -> ConvexityMetadata {
        self.metadata
    }

    fn check_param(&self, zeta: &Parameter) -> Result<()> {
        if zeta.0.len() != self.agent_count() {
            return Err(Error::DimensionMismatch("one parameter block per agent expected".into()));
        }
        for (i, z) in zeta.0.iter().enumerate() {
            if z.len() != self.costs[i].param_dim() {
                return Err(Error::DimensionMismatch(format!(
                    "agent {i}: parameter has {} entries, cost expects {}",
                    z.len(),
                    self.costs[i].param_dim()
                )));
            }
        }
        Ok(())
    }

    fn check_global(&self, z: &DVector<f64>) -> Result<()> {
        if z.len() != self.dim() {
            return Err(Error::DimensionMismatch(format!("global vector has {} entries, expected {}", z.len(), self.dim())));
        }
        Ok(())
    }

    /// Global linear term `c(ζ) = Σ E_iᵀ(h_iᵀζ_i + c_i)`.
    pub fn global_linear(&self, zeta: &Parameter) -> Result<DVector<f64>> {
        self.check_param(zeta)?;
        let mut c = DVector::zeros(self.dim());
        for i in 0..self.agent_count() {
            c += self.selectors.lift(i, &self.costs[i].linear_term(&zeta.0[i]));
        }
        Ok(c)
    }

    pub fn objective(&self, z: &DVector<f64>, zeta: &Parameter) -> Result<f64> {
        self.check_global(z)?;
        let c = self.global_linear(zeta)?;
        Ok(z.dot(&(&self.hessian * z)) + c.dot(z))
    }

    pub fn global_gradient(&self, z: &DVector<f64>, zeta: &Parameter) -> Result<DVector<f64>> {
        self.check_global(z)?;
        let c = self.global_linear(zeta)?;
        Ok(2.0 * (&self.hessian * z) + c)
    }

    /// Gradient of `f_i` with respect to `z_{N_i}`.
    pub fn local_gradient(&self, i: usize, z_local: &DVector<f64>, zeta_i: &DVector<f64>) -> Result<DVector<f64>> {
        let c = &self.costs[i];
        if z_local.len() != c.dim() || zeta_i.len() != c.param_dim() {
            return Err(Error::DimensionMismatch(format!(
                "agent {i}: neighbourhood vector {} (expected {}), parameter {} (expected {})",
                z_local.len(),
                c.dim(),
                zeta_i.len(),
                c.param_dim()
            )));
        }
        Ok(c.gradient(z_local, zeta_i))
    }

    pub fn lift(&self, i: usize, local: &DVector<f64>) -> DVector<f64> {
        self.selectors.lift(i, local)
    }

    /// Largest constraint violation over all agents of a global vector.
    pub fn violation(&self, z: &DVector<f64>) -> f64 {
        self.selectors
            .split(z)
            .iter()
            .zip(&self.constraints)
            .map(|(zi, c)| c.violation(zi))
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn graph_basics() {
        let g = Graph::from_one_indexed(3, &[(1, 2), (1, 3), (2, 1)]).unwrap();
        assert_eq!(g.edges(), &[(0, 1), (0, 2)]);
        assert_eq!(g.neighbors(0), &[1, 2]);
        assert_eq!(g.closed_neighborhood(2), vec![2, 0]);
        assert_eq!(g.degree(), 2);
        assert!(g.is_connected());
        assert!(Graph::new(3, &[(0, 0)]).is_err());
        assert!(!Graph::new(3, &[(0, 1)]).unwrap().is_connected());
        assert!(Graph::new(1, &[]).unwrap().is_connected());
    }

    #[test]
    fn single_agent_selectors_are_identity() {
        let g = Graph::new(1, &[]).unwrap();
        let s = SelectionMaps::new(&g, &[3]).unwrap();
        assert_eq!(s.e_indices(0), vec![0, 1, 2]);
        assert_eq!(s.f_range(0, 0), Some(0..3));
    }

    #[test]
    fn identity_problem_metadata() {
        let g = Graph::new(2, &[(0, 1)]).unwrap();
        let half = DMatrix::identity(2, 2) * 0.25;
        let costs = vec![LocalCost::quadratic(half.clone()).unwrap(), LocalCost::quadratic(half).unwrap()];
        let sets = vec![
            LocalConstraintSet::boxed(DVector::from_element(1, -1.0), DVector::from_element(1, 1.0)).unwrap(),
            LocalConstraintSet::boxed(DVector::from_element(1, -1.0), DVector::from_element(1, 1.0)).unwrap(),
        ];
        let p = DistributedProblem::build(g, costs, sets).unwrap();
        let md = p.convexity_metadata();
        assert!((md.lipschitz - 1.0).abs() < 1e-12);
        assert!((md.strong_convexity - 1.0).abs() < 1e-12);
        assert_eq!(md.gamma, 1.0);
    }

    #[test]
    fn rejects_disconnected_and_singular() {
        let g = Graph::new(2, &[]).unwrap();
        let costs = vec![
            LocalCost::quadratic(DMatrix::identity(1, 1)).unwrap(),
            LocalCost::quadratic(DMatrix::identity(1, 1)).unwrap(),
        ];
        let b = || LocalConstraintSet::boxed(DVector::from_element(1, -1.0), DVector::from_element(1, 1.0)).unwrap();
        assert!(matches!(DistributedProblem::build(g, costs, vec![b(), b()]), Err(Error::DisconnectedGraph)));
        let g = Graph::new(1, &[]).unwrap();
        let c = LocalCost::quadratic(DMatrix::zeros(1, 1)).unwrap();
        assert!(matches!(DistributedProblem::build(g, vec![c], vec![b()]), Err(Error::NotStronglyConvex { .. })));
    }

    #[test]
    fn empty_set_rejected() {
        let g = Graph::new(1, &[]).unwrap();
        let c = LocalCost::quadratic(DMatrix::identity(2, 2)).unwrap();
        let set = LocalConstraintSet::affine_box(
            DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
            DVector::from_element(1, 5.0),
            DVector::from_element(2, -1.0),
            DVector::from_element(2, 1.0),
        )
        .unwrap();
        assert!(matches!(DistributedProblem::build(g, vec![c], vec![set]), Err(Error::EmptyConstraintSet { agent: 0 })));
    }

    #[test]
    fn ellipsoid_projection_is_on_boundary() {
        let e = Ellipsoid::new(
            vec![0, 2],
            DVector::from_vec(vec![1.0, 0.0]),
            DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]),
            0.5,
        )
        .unwrap();
        let x = DVector::from_vec(vec![3.0, 7.0, -2.0]);
        let y = e.project(&x);
        assert!(e.excess(&y).abs() < 1e-10);
        assert_eq!(y[1], 7.0);
        let inside = DVector::from_vec(vec![1.1, 0.0, 0.1]);
        assert_eq!(e.project(&inside), inside);
    }
}
