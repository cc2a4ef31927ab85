//! Formation-control DMPC in distributed QP form.
//!
//! Each agent's variable is the sparse trajectory
//! `z_i = [x̄_i(0), …, x̄_i(N), ū_i(0), …, ū_i(N−1)]`. Dynamics, the initial-state
//! equality and the boxes form an affine-and-box set; the optional terminal set
//! is an ellipsoid in the terminal-weight metric. Formation costs live on edges
//! of the communication graph and are split evenly between both endpoints.
//!
//! With [`DmpcSpec::scaling`] on, the QP handed to the solver is expressed in
//! `w = D⁻¹z` with `D = diag(2H)^{-1/2}` (Jacobi scaling). All public inputs
//! and outputs of [`DmpcProblem`] except the raw solver iterates are physical.

use std::collections::VecDeque;
use std::ops::Range;

use nalgebra::{DMatrix, DVector};

use crate::auv::LinearModel;
use crate::error::{Error, Result};
use crate::linalg;
use crate::netqp::{AffineBoxSet, DistributedProblem, Ellipsoid, Graph, LocalConstraintSet, LocalCost, Parameter};

/// Relative-position requirement `p_from − p_to = offset` weighted by `weight·I₃`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FormationEdge {
    pub from: usize,
    pub to: usize,
    pub offset: [f64; 3],
    pub weight: f64,
}

/// Source of the terminal weight `P_i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalWeight {
    /// `P_i = Q_i`.
    #[default]
    Stage,
    /// Stabilizing solution of the discrete algebraic Riccati equation.
    Riccati,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DmpcSpec {
    /// `N`.
    pub horizon: usize,
    /// `Q_i`, shared by all agents.
    pub state_weight: DMatrix<f64>,
    /// `R_i`, shared by all agents.
    pub input_weight: DMatrix<f64>,
    pub terminal_weight: TerminalWeight,
    /// Level `α` of the terminal ellipsoid; `None` disables it.
    pub terminal_level: Option<f64>,
    pub leader: usize,
    /// Leader position setpoint.
    pub setpoint: [f64; 3],
    pub edges: Vec<FormationEdge>,
    /// State coordinates holding the position.
    pub position_coords: [usize; 3],
    pub state_lower: DVector<f64>,
    pub state_upper: DVector<f64>,
    pub input_lower: DVector<f64>,
    pub input_upper: DVector<f64>,
    pub scaling: bool,
}

impl DmpcSpec {
    /// Three vehicles, leader 0 with followers 1 and 2 at the default offsets.
    pub fn three_auv() -> Self {
        use std::f64::consts::{FRAC_PI_3, FRAC_PI_6};
        let mut q = vec![10.0; 6];
        q.extend([1.0; 6]);
        let upper = DVector::from_vec(vec![5.0, 5.0, 5.0, FRAC_PI_3, FRAC_PI_3, FRAC_PI_3, 1.0, 1.0, 1.0, FRAC_PI_6, FRAC_PI_6, FRAC_PI_6]);
        let mut lower = -upper.clone();
        lower[0] = -10.0;
        Self {
            horizon: 10,
            state_weight: DMatrix::from_diagonal(&DVector::from_vec(q)),
            input_weight: DMatrix::identity(8, 8) * 0.1,
            terminal_weight: TerminalWeight::Stage,
            terminal_level: None,
            leader: 0,
            setpoint: [0.0; 3],
            edges: vec![
                FormationEdge { from: 0, to: 1, offset: [2.0, -1.0, 0.0], weight: 3.0 },
                FormationEdge { from: 0, to: 2, offset: [2.0, 1.0, 0.0], weight: 3.0 },
            ],
            position_coords: [0, 1, 2],
            state_lower: lower,
            state_upper: upper,
            input_lower: DVector::from_element(8, -2.0),
            input_upper: DVector::from_element(8, 2.0),
            scaling: true,
        }
    }

    pub fn validate(&self, agents: usize, state_dim: usize, input_dim: usize) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::InvalidParameter("horizon must be at least one".into()));
        }
        if self.state_weight.shape() != (state_dim, state_dim) || self.input_weight.shape() != (input_dim, input_dim) {
            return Err(Error::DimensionMismatch("weights do not match the model dimensions".into()));
        }
        if self.state_lower.len() != state_dim || self.state_upper.len() != state_dim {
            return Err(Error::DimensionMismatch("state bounds do not match the state dimension".into()));
        }
        if self.input_lower.len() != input_dim || self.input_upper.len() != input_dim {
            return Err(Error::DimensionMismatch("input bounds do not match the input dimension".into()));
        }
        for w in [&self.state_weight, &self.input_weight] {
            if !linalg::is_symmetric(w, 1e-12) || !(linalg::symmetric_extremes(w).0 > 0.0) {
                return Err(Error::InvalidParameter("Q and R must be symmetric positive definite".into()));
            }
        }
        if self.leader >= agents {
            return Err(Error::InvalidParameter(format!("leader {} out of range", self.leader)));
        }
        if self.position_coords.iter().any(|&c| c >= state_dim) {
            return Err(Error::InvalidParameter("position coordinate out of range".into()));
        }
        for e in &self.edges {
            if e.from >= agents || e.to >= agents || e.from == e.to {
                return Err(Error::InvalidGraph(format!("bad formation edge ({}, {})", e.from, e.to)));
            }
            if !(e.weight > 0.0) {
                return Err(Error::InvalidParameter("formation weights must be positive".into()));
            }
        }
        if let Some(a) = self.terminal_level {
            if !(a > 0.0) {
                return Err(Error::InvalidParameter("terminal level must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn graph(&self, agents: usize) -> Result<Graph> {
        let edges: Vec<(usize, usize)> = self.edges.iter().map(|e| (e.from, e.to)).collect();
        Graph::new(agents, &edges)
    }
}

/// Position references by breadth-first propagation of the edge offsets from the leader.
pub fn formation_references(agents: usize, leader: usize, setpoint: [f64; 3], edges: &[FormationEdge]) -> Result<Vec<[f64; 3]>> {
    if leader >= agents {
        return Err(Error::InvalidParameter(format!("leader {leader} out of range")));
    }
    let mut refs: Vec<Option<[f64; 3]>> = vec![None; agents];
    refs[leader] = Some(setpoint);
    let mut queue = VecDeque::from([leader]);
    while let Some(i) = queue.pop_front() {
        let pi = refs[i].expect("queued agents have references");
        for e in edges {
            let (other, sign) = if e.from == i {
                (e.to, -1.0)
            } else if e.to == i {
                (e.from, 1.0)
            } else {
                continue;
            };
            let p = [pi[0] + sign * e.offset[0], pi[1] + sign * e.offset[1], pi[2] + sign * e.offset[2]];
            match refs[other] {
                None => {
                    refs[other] = Some(p);
                    queue.push_back(other);
                }
                Some(q) => {
                    if (0..3).any(|k| (q[k] - p[k]).abs() > 1e-9) {
                        return Err(Error::InvalidParameter("formation offsets are inconsistent around a cycle".into()));
                    }
                }
            }
        }
    }
    refs.into_iter()
        .enumerate()
        .map(|(i, r)| r.ok_or_else(|| Error::InvalidGraph(format!("agent {i} is not connected to the leader"))))
        .collect()
}

/// Solve the DARE by structured doubling and return `P`.
pub fn riccati_terminal(a: &DMatrix<f64>, b: &DMatrix<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let rinv = r.clone().try_inverse().ok_or(Error::InvalidParameter("R is singular".into()))?;
    let mut ak = a.clone();
    let mut gk = b * rinv * b.transpose();
    let mut hk = q.clone();
    let eye = DMatrix::<f64>::identity(n, n);
    for _ in 0..100 {
        let w = (&eye + &gk * &hk).try_inverse().ok_or(Error::RiccatiDivergence { residual: f64::INFINITY })?;
        let aw = &ak * &w;
        let g_next = &gk + &aw * &gk * ak.transpose();
        let h_next = &hk + ak.transpose() * &hk * &w * &ak;
        let a_next = &aw * &ak;
        let change = (&h_next - &hk).norm();
        hk = 0.5 * (&h_next + h_next.transpose());
        gk = g_next;
        ak = a_next;
        if change <= 1e-15 * hk.norm().max(1.0) || ak.norm() < 1e-300 {
            break;
        }
    }
    let mut p = hk;
    // A few fixed-point sweeps remove the doubling round-off.
    for _ in 0..3 {
        let next = riccati_map(a, b, q, r, &p)?;
        p = 0.5 * (&next + next.transpose());
    }
    let residual = dare_residual(a, b, q, r, &p);
    if !residual.is_finite() || residual > 1e-8 * p.norm().max(1.0) {
        return Err(Error::RiccatiDivergence { residual });
    }
    Ok(p)
}

fn riccati_map(a: &DMatrix<f64>, b: &DMatrix<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>, p: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let pb = p * b;
    let s = r + b.transpose() * &pb;
    let k = s.cholesky().ok_or(Error::RiccatiDivergence { residual: f64::INFINITY })?.solve(&(pb.transpose() * a));
    Ok(a.transpose() * p * a - a.transpose() * &pb * k + q)
}

/// `‖A'PA − P − A'PB(B'PB+R)⁻¹B'PA + Q‖_F`.
pub fn dare_residual(a: &DMatrix<f64>, b: &DMatrix<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>, p: &DMatrix<f64>) -> f64 {
    match riccati_map(a, b, q, r, p) {
        Ok(m) => (m - p).norm(),
        Err(_) => f64::INFINITY,
    }
}

/// Index layout of one agent's trajectory variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub state_dim: usize,
    pub input_dim: usize,
    pub horizon: usize,
}

impl Layout {
    /// `m_i = n_x(N+1) + n_u N`.
    pub fn dim(&self) -> usize {
        self.state_dim * (self.horizon + 1) + self.input_dim * self.horizon
    }

    pub fn state(&self, l: usize) -> Range<usize> {
        l * self.state_dim..(l + 1) * self.state_dim
    }

    pub fn input(&self, l: usize) -> Range<usize> {
        let o = self.state_dim * (self.horizon + 1) + l * self.input_dim;
        o..o + self.input_dim
    }

    pub fn pack(&self, states: &[DVector<f64>], inputs: &[DVector<f64>]) -> Result<DVector<f64>> {
        if states.len() != self.horizon + 1 || inputs.len() != self.horizon {
            return Err(Error::LayoutError(format!(
                "expected {} states and {} inputs, got {} and {}",
                self.horizon + 1,
                self.horizon,
                states.len(),
                inputs.len()
            )));
        }
        if states.iter().any(|s| s.len() != self.state_dim) || inputs.iter().any(|u| u.len() != self.input_dim) {
            return Err(Error::LayoutError("block length mismatch".into()));
        }
        let mut z = DVector::zeros(self.dim());
        for (l, s) in states.iter().enumerate() {
            z.rows_mut(l * self.state_dim, self.state_dim).copy_from(s);
        }
        for (l, u) in inputs.iter().enumerate() {
            z.rows_mut(self.input(l).start, self.input_dim).copy_from(u);
        }
        Ok(z)
    }

    pub fn unpack(&self, z: &DVector<f64>) -> Result<(Vec<DVector<f64>>, Vec<DVector<f64>>)> {
        self.check(z)?;
        let states = (0..=self.horizon).map(|l| z.rows(l * self.state_dim, self.state_dim).into_owned()).collect();
        let inputs = (0..self.horizon).map(|l| z.rows(self.input(l).start, self.input_dim).into_owned()).collect();
        Ok((states, inputs))
    }

    fn check(&self, z: &DVector<f64>) -> Result<()> {
        if z.len() != self.dim() {
            return Err(Error::LayoutError(format!("variable has {} entries, layout needs {}", z.len(), self.dim())));
        }
        Ok(())
    }

    /// `ū(0)`.
    pub fn first_input(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        self.check(z)?;
        Ok(z.rows(self.input(0).start, self.input_dim).into_owned())
    }
}

fn add_block(h: &mut DMatrix<f64>, r: usize, c: usize, m: &DMatrix<f64>) {
    let mut v = h.view_mut((r, c), m.shape());
    v += m;
}

/// The formation DMPC problem with cached Hessian and constraint structure.
#[derive(Debug, Clone)]
pub struct DmpcProblem {
    spec: DmpcSpec,
    models: Vec<LinearModel>,
    layout: Layout,
    terminal: Vec<DMatrix<f64>>,
    state_refs: Vec<DVector<f64>>,
    input_refs: Vec<DVector<f64>>,
    scale: Vec<DVector<f64>>,
    problem: DistributedProblem,
}

/// Build the DMPC problem and the parameter `ζ` for the measured states.
pub fn build_distributed_qp(spec: &DmpcSpec, models: &[LinearModel], states: &[DVector<f64>]) -> Result<(DmpcProblem, Parameter)> {
    let mut p = DmpcProblem::new(spec, models)?;
    let zeta = p.update(states)?;
    Ok((p, zeta))
}

impl DmpcProblem {
    pub fn new(spec: &DmpcSpec, models: &[LinearModel]) -> Result<Self> {
        let agents = models.len();
        if agents == 0 {
            return Err(Error::InvalidParameter("at least one agent is required".into()));
        }
        let (nx, nu) = (models[0].state_dim(), models[0].input_dim());
        if models.iter().any(|m| m.state_dim() != nx || m.input_dim() != nu) {
            return Err(Error::DimensionMismatch("all agents must share state and input dimensions".into()));
        }
        spec.validate(agents, nx, nu)?;
        let layout = Layout { state_dim: nx, input_dim: nu, horizon: spec.horizon };
        let graph = spec.graph(agents)?;
        let positions = formation_references(agents, spec.leader, spec.setpoint, &spec.edges)?;
        let state_refs: Vec<DVector<f64>> = positions
            .iter()
            .map(|p| {
                let mut x = DVector::zeros(nx);
                for (k, &c) in spec.position_coords.iter().enumerate() {
                    x[c] = p[k];
                }
                x
            })
            .collect();
        let input_refs = vec![DVector::zeros(nu); agents];
        let terminal = models
            .iter()
            .map(|m| match spec.terminal_weight {
                TerminalWeight::Stage => Ok(spec.state_weight.clone()),
                TerminalWeight::Riccati => riccati_terminal(&m.a, &m.b, &spec.state_weight, &spec.input_weight),
            })
            .collect::<Result<Vec<_>>>()?;

        let sizes = vec![layout.dim(); agents];
        let sel = crate::netqp::SelectionMaps::new(&graph, &sizes)?;
        let (costs, diag) = Self::physical_costs(spec, &layout, &graph, &sel, &terminal)?;
        let scale: Vec<DVector<f64>> = (0..agents)
            .map(|i| {
                if spec.scaling {
                    diag.rows(i * layout.dim(), layout.dim()).map(|d| 1.0 / (2.0 * d).sqrt())
                } else {
                    DVector::from_element(layout.dim(), 1.0)
                }
            })
            .collect();
        let costs = costs
            .into_iter()
            .enumerate()
            .map(|(i, c)| {
                let d = sel.gather_blocks(i, &scale);
                let h = DMatrix::from_fn(c.hessian.nrows(), c.hessian.ncols(), |r, k| c.hessian[(r, k)] * d[r] * d[k]);
                let pm = DMatrix::from_fn(c.param_map.nrows(), c.param_map.ncols(), |r, k| c.param_map[(r, k)] * d[k]);
                LocalCost::new(h, pm, c.offset.component_mul(&d))
            })
            .collect::<Result<Vec<_>>>()?;
        let constraints = (0..agents)
            .map(|i| Self::constraint_set(spec, &layout, &models[i], &terminal[i], &state_refs[i], &scale[i]))
            .collect::<Result<Vec<_>>>()?;
        let problem = DistributedProblem::build(graph, costs, constraints)?;
        Ok(Self { spec: spec.clone(), models: models.to_vec(), layout, terminal, state_refs, input_refs, scale, problem })
    }

    /// Local costs in physical coordinates plus the diagonal of the global `H`.
    fn physical_costs(
        spec: &DmpcSpec,
        layout: &Layout,
        graph: &Graph,
        sel: &crate::netqp::SelectionMaps,
        terminal: &[DMatrix<f64>],
    ) -> Result<(Vec<LocalCost>, DVector<f64>)> {
        let (nx, nu, n) = (layout.state_dim, layout.input_dim, layout.horizon);
        let agents = graph.vertex_count();
        let pdim = 2 * nx + nu;
        let mut costs = Vec::with_capacity(agents);
        for i in 0..agents {
            let dim = sel.neighborhood_dim(i);
            let mut h = DMatrix::zeros(dim, dim);
            let mut pm = DMatrix::zeros(pdim, dim);
            let mut c = DVector::zeros(dim);
            let own = sel.f_range(i, i).expect("own block").start;
            for l in 0..n {
                let s = own + layout.state(l).start;
                add_block(&mut h, s, s, &spec.state_weight);
                add_block(&mut pm, nx, s, &(-2.0 * &spec.state_weight));
                let u = own + layout.input(l).start;
                add_block(&mut h, u, u, &spec.input_weight);
                add_block(&mut pm, 2 * nx, u, &(-2.0 * &spec.input_weight));
            }
            let s = own + layout.state(n).start;
            add_block(&mut h, s, s, &terminal[i]);
            add_block(&mut pm, nx, s, &(-2.0 * &terminal[i]));
            for e in spec.edges.iter().filter(|e| e.from == i || e.to == i) {
                let fi = sel.f_range(i, e.from).expect("edge endpoints are neighbours").start;
                let fj = sel.f_range(i, e.to).expect("edge endpoints are neighbours").start;
                let w = 0.5 * e.weight;
                for l in 0..n {
                    for (k, &pc) in spec.position_coords.iter().enumerate() {
                        let a = fi + layout.state(l).start + pc;
                        let b = fj + layout.state(l).start + pc;
                        h[(a, a)] += w;
                        h[(b, b)] += w;
                        h[(a, b)] -= w;
                        h[(b, a)] -= w;
                        c[a] -= 2.0 * w * e.offset[k];
                        c[b] += 2.0 * w * e.offset[k];
                    }
                }
            }
            costs.push(LocalCost::new(h, pm, c)?);
        }
        let mut diag = DVector::zeros(sel.global_dim());
        for (i, cost) in costs.iter().enumerate() {
            for (k, g) in sel.e_indices(i).into_iter().enumerate() {
                diag[g] += cost.hessian[(k, k)];
            }
        }
        Ok((costs, diag))
    }

    fn constraint_set(
        spec: &DmpcSpec,
        layout: &Layout,
        model: &LinearModel,
        terminal: &DMatrix<f64>,
        state_ref: &DVector<f64>,
        scale: &DVector<f64>,
    ) -> Result<LocalConstraintSet> {
        let (nx, nu, n) = (layout.state_dim, layout.input_dim, layout.horizon);
        let dim = layout.dim();
        let mut aeq = DMatrix::zeros(nx * (n + 1), dim);
        aeq.view_mut((0, 0), (nx, nx)).fill_with_identity();
        for l in 0..n {
            let r = nx * (l + 1);
            aeq.view_mut((r, layout.state(l).start), (nx, nx)).copy_from(&model.a);
            aeq.view_mut((r, layout.state(l + 1).start), (nx, nx)).fill_diagonal(-1.0);
            aeq.view_mut((r, layout.input(l).start), (nx, nu)).copy_from(&model.b);
        }
        for k in 0..dim {
            let mut col = aeq.column_mut(k);
            col *= scale[k];
        }
        let mut lower = DVector::from_element(dim, f64::NEG_INFINITY);
        let mut upper = DVector::from_element(dim, f64::INFINITY);
        for l in 1..=n {
            let r = layout.state(l);
            lower.rows_mut(r.start, nx).copy_from(&spec.state_lower);
            upper.rows_mut(r.start, nx).copy_from(&spec.state_upper);
        }
        for l in 0..n {
            let r = layout.input(l);
            lower.rows_mut(r.start, nu).copy_from(&spec.input_lower);
            upper.rows_mut(r.start, nu).copy_from(&spec.input_upper);
        }
        let lower = lower.component_div(scale);
        let upper = upper.component_div(scale);
        let beq = DVector::zeros(nx * (n + 1));
        let affine = AffineBoxSet::new(aeq, beq, lower, upper)?;
        match spec.terminal_level {
            None => Ok(LocalConstraintSet::AffineIntersectBox(affine)),
            Some(level) => {
                let r = layout.state(n);
                let d = scale.rows(r.start, nx);
                let shape = DMatrix::from_fn(nx, nx, |a, b| terminal[(a, b)] * d[a] * d[b]);
                let center = state_ref.component_div(&d);
                let e = Ellipsoid::new(r.collect(), center, shape, level)?;
                LocalConstraintSet::affine_box_ellipsoid(affine, e)
            }
        }
    }

    /// Set the initial-state equalities to the measured states and return `ζ`.
    pub fn update(&mut self, states: &[DVector<f64>]) -> Result<Parameter> {
        let nx = self.layout.state_dim;
        if states.len() != self.agent_count() || states.iter().any(|s| s.len() != nx) {
            return Err(Error::DimensionMismatch("one measured state per agent is required".into()));
        }
        if states.iter().any(|s| !linalg::all_finite(s)) {
            return Err(Error::NonFiniteInput);
        }
        for (i, x) in states.iter().enumerate() {
            let mut beq = DVector::zeros(nx * (self.layout.horizon + 1));
            beq.rows_mut(0, nx).copy_from(x);
            self.problem.constraint_mut(i).set_equality_rhs(beq)?;
        }
        Ok(self.parameter(states))
    }

    /// `ζ_i = (x_i(t), x_{r_i}, u_{r_i})`.
    pub fn parameter(&self, states: &[DVector<f64>]) -> Parameter {
        Parameter(
            states
                .iter()
                .enumerate()
                .map(|(i, x)| linalg::concat(&[x.clone(), self.state_refs[i].clone(), self.input_refs[i].clone()]))
                .collect(),
        )
    }

    pub fn problem(&self) -> &DistributedProblem {
        &self.problem
    }

    pub fn spec(&self) -> &DmpcSpec {
        &self.spec
    }

    pub fn models(&self) -> &[LinearModel] {
        &self.models
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn agent_count(&self) -> usize {
        self.models.len()
    }

    pub fn state_reference(&self, i: usize) -> &DVector<f64> {
        &self.state_refs[i]
    }

    pub fn terminal_weight(&self, i: usize) -> &DMatrix<f64> {
        &self.terminal[i]
    }

    /// Per-agent scaling `D_i` with `z_i = D_i w_i`.
    pub fn scaling(&self, i: usize) -> &DVector<f64> {
        &self.scale[i]
    }

    /// Solver variable of agent `i` to physical trajectory.
    pub fn to_physical(&self, i: usize, w: &DVector<f64>) -> Result<DVector<f64>> {
        self.layout.check(w)?;
        Ok(w.component_mul(&self.scale[i]))
    }

    /// Physical trajectory of agent `i` to solver variable.
    pub fn to_scaled(&self, i: usize, z: &DVector<f64>) -> Result<DVector<f64>> {
        self.layout.check(z)?;
        Ok(z.component_div(&self.scale[i]))
    }

    /// Whole solver stack to physical stack.
    pub fn global_to_physical(&self, w: &DVector<f64>) -> Result<DVector<f64>> {
        let parts = self.problem.selectors().split(w);
        let phys = parts.iter().enumerate().map(|(i, p)| self.to_physical(i, p)).collect::<Result<Vec<_>>>()?;
        Ok(linalg::concat(&phys))
    }

    /// `u_i(0)` from agent `i`'s solver variable.
    pub fn extract_control(&self, i: usize, w: &DVector<f64>) -> Result<DVector<f64>> {
        if i >= self.agent_count() {
            return Err(Error::LayoutError(format!("agent {i} out of range")));
        }
        self.layout.first_input(&self.to_physical(i, w)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn follower_references() {
        let s = DmpcSpec::three_auv();
        let r = formation_references(3, 0, [0.0; 3], &s.edges).unwrap();
        assert_eq!(r, vec![[0.0, 0.0, 0.0], [-2.0, 1.0, 0.0], [-2.0, -1.0, 0.0]]);
    }

    #[test]
    fn scalar_dare() {
        let a = DMatrix::from_element(1, 1, 0.5);
        let one = DMatrix::from_element(1, 1, 1.0);
        let p = riccati_terminal(&a, &one, &one, &one).unwrap();
        let exact = (0.25 + (0.0625f64 + 4.0).sqrt()) / 2.0;
        assert!((p[(0, 0)] - exact).abs() < 1e-10);
        let zero = DMatrix::zeros(2, 2);
        let q = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 3.0]));
        let p = riccati_terminal(&zero, &DMatrix::identity(2, 1), &q, &one).unwrap();
        assert!((p - q).norm() < 1e-12);
    }

    #[test]
    fn layout_round_trip() {
        let l = Layout { state_dim: 2, input_dim: 1, horizon: 3 };
        let z = DVector::from_fn(l.dim(), |k, _| k as f64);
        let (s, u) = l.unpack(&z).unwrap();
        assert_eq!(l.pack(&s, &u).unwrap(), z);
        assert_eq!(l.first_input(&z).unwrap()[0], 8.0);
        assert!(l.first_input(&DVector::zeros(3)).is_err());
    }
}
