//! Quantized distributed projected-gradient method with warm starting and
//! progressive quantization refinement.
//!
//! One call to [`inner_solve`] performs `K + 1` synchronous rounds. In round `k`
//! every agent
//!
//! 1. quantizes its iterate on an interval of length `C_α κᵏ` centred on its
//!    previous quantized iterate and broadcasts the indices;
//! 2. decodes its neighbours' iterates, projects each block onto the owner's
//!    constraint set and evaluates its local gradient;
//! 3. quantizes that gradient on an interval of length `C_β κᵏ` and broadcasts it;
//! 4. decodes the gradients of its closed neighbourhood, sums the blocks that
//!    refer to its own variable and takes a projected gradient step.
//!
//! Agents only exchange [`QuantizedMessage`]s. Quantizer mid-values persist across
//! time steps so receivers can always decode; intervals restart at `C_α`, `C_β`.

pub mod projection;

use std::fs::File;
use std::path::Path;

use nalgebra::DVector;
use rayon::prelude::*;

pub use projection::{project, project_warm, AffineMethod, ProjectionOptions, ProjectionWarmStart};

use crate::error::{Error, Result};
use crate::linalg;
use crate::netqp::{DistributedProblem, Parameter};
use crate::quant::{Channel, QuantizedMessage, QuantizerState};

/// Quantizer parameters shared by all agents.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantizerSettings {
    pub bits: u32,
    pub kappa: f64,
    pub c_alpha: f64,
    pub c_beta: f64,
}

/// How values travel between agents.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum QuantizerMode {
    /// Full-precision values, no bit accounting.
    PassThrough,
    Quantized(QuantizerSettings),
}

/// Which product `T` is compared against when a bit budget is enforced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BudgetConvention {
    /// `n·K ≤ T`, the convention used when enumerating designs.
    Iterations,
    /// `n·(K + 1) ≤ T`, counting every transmitted round.
    Rounds,
}

/// Agent work scheduling inside a round; both produce identical results.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Schedule {
    Sequential,
    Parallel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub step_size: f64,
    /// `K`; each solve runs `K + 1` rounds.
    pub iterations: usize,
    pub mode: QuantizerMode,
    pub projection: ProjectionOptions,
    pub bit_budget: Option<u64>,
    pub budget_convention: BudgetConvention,
    pub schedule: Schedule,
}

impl SolverConfig {
    /// Default step `0.9/L`.
    pub fn default_step(problem: &DistributedProblem) -> f64 {
        0.9 / problem.convexity_metadata().lipschitz
    }

    pub fn pass_through(problem: &DistributedProblem, iterations: usize) -> Self {
        Self {
            step_size: Self::default_step(problem),
            iterations,
            mode: QuantizerMode::PassThrough,
            projection: ProjectionOptions::default(),
            bit_budget: None,
            budget_convention: BudgetConvention::Iterations,
            schedule: Schedule::Sequential,
        }
    }

    pub fn quantized(problem: &DistributedProblem, iterations: usize, settings: QuantizerSettings) -> Self {
        Self { mode: QuantizerMode::Quantized(settings), ..Self::pass_through(problem, iterations) }
    }

    /// Check `τ < 1/L`, `1 − γ < κ < 1` and the bit budget.
    pub fn validate(&self, problem: &DistributedProblem) -> Result<()> {
        let md = problem.convexity_metadata();
        if !(self.step_size > 0.0 && self.step_size < 1.0 / md.lipschitz) {
            return Err(Error::InvalidParameter(format!(
                "step size {} must lie in (0, 1/L = {})",
                self.step_size,
                1.0 / md.lipschitz
            )));
        }
        if let QuantizerMode::Quantized(q) = &self.mode {
            if !(q.kappa > 1.0 - md.gamma && q.kappa < 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "κ = {} must lie in (1 − γ, 1) = ({}, 1)",
                    q.kappa,
                    1.0 - md.gamma
                )));
            }
            if !(q.c_alpha > 0.0 && q.c_beta > 0.0) {
                return Err(Error::InvalidParameter("initial intervals must be positive".into()));
            }
            if let Some(budget) = self.bit_budget {
                let rounds = match self.budget_convention {
                    BudgetConvention::Iterations => self.iterations as u64,
                    BudgetConvention::Rounds => self.iterations as u64 + 1,
                };
                let required = q.bits as u64 * rounds;
                if required > budget {
                    return Err(Error::BudgetViolation { required, budget });
                }
            }
        }
        Ok(())
    }
}

/// Hook into the message exchange and the iterates.
pub trait Observer {
    /// Called for every message before delivery. Observers may rewrite the
    /// message, which is how channel faults are emulated in tests.
    fn on_message(&mut self, _msg: &mut QuantizedMessage) {}
    /// Called after every update with `z_i^{k+1}`.
    fn on_iterate(&mut self, _round: usize, _agent: usize, _iterate: &DVector<f64>) {}
}

/// Observer that does nothing.
pub struct NoObserver;

impl Observer for NoObserver {}

/// Everything agent `i` keeps between rounds and time steps.
#[derive(Debug, Clone)]
pub struct AgentState {
    id: usize,
    members: Vec<usize>,
    /// `z_i^{t,k}`.
    pub iterate: DVector<f64>,
    last_variable: DVector<f64>,
    last_gradient: DVector<f64>,
    /// Decoder mid-values for the variables of each member of the closed neighbourhood.
    seen_variables: Vec<DVector<f64>>,
    /// Decoder mid-values for the gradients of each member.
    seen_gradients: Vec<DVector<f64>>,
    /// Where `z_i` sits inside each member's neighbourhood stack.
    own_blocks: Vec<std::ops::Range<usize>>,
    block_warm: Vec<ProjectionWarmStart>,
    step_warm: ProjectionWarmStart,
    neighborhood_estimate: DVector<f64>,
    gradient: DVector<f64>,
}

impl AgentState {
    pub fn id(&self) -> usize {
        self.id
    }

    /// Last quantized iterate `ẑ_i`.
    pub fn last_quantized_variable(&self) -> &DVector<f64> {
        &self.last_variable
    }

    /// Last quantized gradient `∇̂f_i`.
    pub fn last_quantized_gradient(&self) -> &DVector<f64> {
        &self.last_gradient
    }
}

/// State of all agents.
#[derive(Debug, Clone)]
pub struct SolverState {
    pub agents: Vec<AgentState>,
}

impl SolverState {
    /// Initialise from `z^{0,0}`. The initial quantized values are `ẑ_i = z_i^{0,0}`
    /// and `∇̂f_i = ∇f_i(Proj_{C_{N_i}}(z_{N_i}^{0,0}))`, shared by all agents offline.
    pub fn new(problem: &DistributedProblem, z0: &DVector<f64>, zeta: &Parameter, projection: &ProjectionOptions) -> Result<Self> {
        if z0.len() != problem.dim() {
            return Err(Error::DimensionMismatch(format!("warm start has {} entries, expected {}", z0.len(), problem.dim())));
        }
        let sel = problem.selectors();
        let blocks = sel.split(z0);
        let mut projected = Vec::with_capacity(blocks.len());
        for (j, b) in blocks.iter().enumerate() {
            projected.push(project(problem.constraint(j), b, projection)?);
        }
        let mut gradients = Vec::with_capacity(blocks.len());
        for i in 0..problem.agent_count() {
            let local = sel.gather_blocks(i, &projected);
            gradients.push(problem.local_gradient(i, &local, &zeta.0[i])?);
        }
        let agents = (0..problem.agent_count())
            .map(|i| {
                let members = sel.members(i).to_vec();
                let own_blocks = members.iter().map(|&j| sel.f_range(j, i).expect("symmetric graph")).collect();
                AgentState {
                    id: i,
                    iterate: blocks[i].clone(),
                    last_variable: blocks[i].clone(),
                    last_gradient: gradients[i].clone(),
                    seen_variables: members.iter().map(|&j| blocks[j].clone()).collect(),
                    seen_gradients: members.iter().map(|&j| gradients[j].clone()).collect(),
                    own_blocks,
                    block_warm: vec![ProjectionWarmStart::default(); members.len()],
                    step_warm: ProjectionWarmStart::default(),
                    neighborhood_estimate: DVector::zeros(sel.neighborhood_dim(i)),
                    gradient: DVector::zeros(sel.neighborhood_dim(i)),
                    members,
                }
            })
            .collect();
        Ok(Self { agents })
    }

    /// Current global iterate.
    pub fn global_iterate(&self) -> DVector<f64> {
        let parts: Vec<_> = self.agents.iter().map(|a| a.iterate.clone()).collect();
        linalg::concat(&parts)
    }
}

/// Result of one [`inner_solve`].
#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    /// `z_i^{t,K+1}`.
    pub iterates: Vec<DVector<f64>>,
    pub rounds: usize,
    /// Payload bits each agent sent on its variable channel.
    pub variable_bits: Vec<u64>,
    /// Payload bits each agent sent on its gradient channel.
    pub gradient_bits: Vec<u64>,
    pub variable_saturations: Vec<usize>,
    pub gradient_saturations: Vec<usize>,
    /// Bits per scalar channel in this solve (`n(K+1)`, zero in pass-through mode).
    pub bits_per_scalar: u64,
    /// `‖z^{t,K+1} − z*‖` when a reference was supplied.
    pub suboptimality: Option<f64>,
}

impl SolveReport {
    pub fn global_iterate(&self) -> DVector<f64> {
        linalg::concat(&self.iterates)
    }

    /// Next warm start `z^{t+1,0} = z^{t,K+1}`.
    pub fn warm_start(&self) -> DVector<f64> {
        self.global_iterate()
    }

    pub fn total_saturations(&self) -> usize {
        self.variable_saturations.iter().sum::<usize>() + self.gradient_saturations.iter().sum::<usize>()
    }

    pub fn total_bits(&self) -> u64 {
        self.variable_bits.iter().sum::<u64>() + self.gradient_bits.iter().sum::<u64>()
    }
}

fn encode(
    mode: &QuantizerMode,
    value: &DVector<f64>,
    mid: &DVector<f64>,
    interval: f64,
    sender: usize,
    channel: Channel,
    round: usize,
) -> Result<(QuantizedMessage, DVector<f64>)> {
    match mode {
        QuantizerMode::PassThrough => {
            Ok((QuantizedMessage::full(sender, channel, round, value.as_slice().to_vec()), value.clone()))
        }
        QuantizerMode::Quantized(q) => {
            let state = QuantizerState::new(mid.as_slice().to_vec(), interval, q.bits)?;
            let (msg, out) = state.encode_quantized(value.as_slice(), sender, channel, round)?;
            Ok((msg, DVector::from_vec(out.values)))
        }
    }
}

fn decode(mode: &QuantizerMode, msg: &QuantizedMessage, mid: &DVector<f64>, interval: f64) -> Result<DVector<f64>> {
    match mode {
        QuantizerMode::PassThrough => {
            let v = msg.full_values()?;
            if v.len() != mid.len() {
                return Err(Error::StateMismatch("message length differs from the expected block".into()));
            }
            Ok(DVector::from_column_slice(v))
        }
        QuantizerMode::Quantized(q) => {
            let state = QuantizerState::new(mid.as_slice().to_vec(), interval, q.bits)?;
            Ok(DVector::from_vec(state.decode(msg)?))
        }
    }
}

fn intervals(mode: &QuantizerMode, round: usize) -> (f64, f64) {
    match mode {
        QuantizerMode::PassThrough => (1.0, 1.0),
        QuantizerMode::Quantized(q) => {
            let s = q.kappa.powi(round as i32);
            (q.c_alpha * s, q.c_beta * s)
        }
    }
}

fn for_each_agent<F>(agents: &mut [AgentState], schedule: Schedule, f: F) -> Result<Vec<QuantizedMessage>>
where
    F: Fn(&mut AgentState) -> Result<Option<QuantizedMessage>> + Sync + Send,
{
    let out: Vec<Result<Option<QuantizedMessage>>> = match schedule {
        Schedule::Sequential => agents.iter_mut().map(&f).collect(),
        Schedule::Parallel => agents.par_iter_mut().map(&f).collect(),
    };
    let mut msgs = Vec::new();
    for r in out {
        if let Some(m) = r? {
            msgs.push(m);
        }
    }
    Ok(msgs)
}

/// Run `K + 1` rounds from the iterates held in `state`, which is updated in place.
pub fn inner_solve(
    problem: &DistributedProblem,
    config: &SolverConfig,
    state: &mut SolverState,
    zeta: &Parameter,
    reference: Option<&DVector<f64>>,
    observer: &mut dyn Observer,
) -> Result<SolveReport> {
    config.validate(problem)?;
    let m = problem.agent_count();
    if state.agents.len() != m || zeta.0.len() != m {
        return Err(Error::DimensionMismatch("solver state, parameter and problem disagree on the agent count".into()));
    }
    let mode = config.mode;
    let tau = config.step_size;
    let proj = config.projection;
    let mut report = SolveReport {
        iterates: Vec::new(),
        rounds: config.iterations + 1,
        variable_bits: vec![0; m],
        gradient_bits: vec![0; m],
        variable_saturations: vec![0; m],
        gradient_saturations: vec![0; m],
        bits_per_scalar: match mode {
            QuantizerMode::PassThrough => 0,
            QuantizerMode::Quantized(q) => q.bits as u64 * (config.iterations as u64 + 1),
        },
        suboptimality: None,
    };

    for round in 0..=config.iterations {
        let (l_alpha, l_beta) = intervals(&mode, round);

        let mut var_msgs = for_each_agent(&mut state.agents, config.schedule, |a| {
            let (msg, q) = encode(&mode, &a.iterate, &a.last_variable, l_alpha, a.id, Channel::Variable, round)?;
            a.last_variable = q;
            Ok(Some(msg))
        })?;
        for msg in &mut var_msgs {
            report.variable_bits[msg.sender] += msg.payload_bits();
            report.variable_saturations[msg.sender] += msg.saturation_count();
            observer.on_message(msg);
        }
        let var_msgs = &var_msgs;

        let mut grad_msgs = for_each_agent(&mut state.agents, config.schedule, |a| {
            let mut at = 0;
            for (slot, &j) in a.members.clone().iter().enumerate() {
                let decoded = decode(&mode, &var_msgs[j], &a.seen_variables[slot], l_alpha)?;
                a.seen_variables[slot] = decoded.clone();
                let projected = project_warm(problem.constraint(j), &decoded, &proj, &mut a.block_warm[slot])?;
                a.neighborhood_estimate.rows_mut(at, projected.len()).copy_from(&projected);
                at += projected.len();
            }
            a.gradient = problem.local_gradient(a.id, &a.neighborhood_estimate, &zeta.0[a.id])?;
            let (msg, q) = encode(&mode, &a.gradient, &a.last_gradient, l_beta, a.id, Channel::Gradient, round)?;
            a.last_gradient = q;
            Ok(Some(msg))
        })?;
        for msg in &mut grad_msgs {
            report.gradient_bits[msg.sender] += msg.payload_bits();
            report.gradient_saturations[msg.sender] += msg.saturation_count();
            observer.on_message(msg);
        }
        let grad_msgs = &grad_msgs;

        for_each_agent(&mut state.agents, config.schedule, |a| {
            let mut direction = DVector::zeros(a.iterate.len());
            for (slot, &j) in a.members.clone().iter().enumerate() {
                let decoded = decode(&mode, &grad_msgs[j], &a.seen_gradients[slot], l_beta)?;
                direction += decoded.rows(a.own_blocks[slot].start, a.own_blocks[slot].len());
                a.seen_gradients[slot] = decoded;
            }
            let target = &a.iterate - tau * direction;
            a.iterate = project_warm(problem.constraint(a.id), &target, &proj, &mut a.step_warm)?;
            Ok(None)
        })?;
        for a in &state.agents {
            observer.on_iterate(round, a.id, &a.iterate);
        }
    }

    report.iterates = state.agents.iter().map(|a| a.iterate.clone()).collect();
    if let Some(r) = reference {
        report.suboptimality = Some((report.global_iterate() - r).norm());
    }
    Ok(report)
}

/// One CSV row of the iteration trace.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct TraceRow {
    pub t: usize,
    pub k: usize,
    pub agent: usize,
    pub error: Option<f64>,
    pub bits: u64,
    pub saturations: usize,
}

/// Observer that records `(t, k, agent, ‖z_i − z_i*‖, bits, saturations)`.
#[derive(Debug, Default)]
pub struct TraceRecorder {
    t: usize,
    reference: Option<Vec<DVector<f64>>>,
    pending_bits: Vec<u64>,
    pending_sats: Vec<usize>,
    pub rows: Vec<TraceRow>,
}

impl TraceRecorder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Start a new time step, optionally with the per-agent optimum.
    pub fn begin_step(&mut self, t: usize, reference: Option<Vec<DVector<f64>>>) {
        self.t = t;
        self.reference = reference;
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_writer(File::create(path)?);
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

impl Observer for TraceRecorder {
    fn on_message(&mut self, msg: &mut QuantizedMessage) {
        if self.pending_bits.len() <= msg.sender {
            self.pending_bits.resize(msg.sender + 1, 0);
            self.pending_sats.resize(msg.sender + 1, 0);
        }
        self.pending_bits[msg.sender] += msg.payload_bits();
        self.pending_sats[msg.sender] += msg.saturation_count();
    }

    fn on_iterate(&mut self, round: usize, agent: usize, iterate: &DVector<f64>) {
        let error = self.reference.as_ref().map(|r| (iterate - &r[agent]).norm());
        let bits = self.pending_bits.get(agent).copied().unwrap_or(0);
        let saturations = self.pending_sats.get(agent).copied().unwrap_or(0);
        if agent < self.pending_bits.len() {
            self.pending_bits[agent] = 0;
            self.pending_sats[agent] = 0;
        }
        self.rows.push(TraceRow { t: self.t, k: round, agent, error, bits, saturations });
    }
}
