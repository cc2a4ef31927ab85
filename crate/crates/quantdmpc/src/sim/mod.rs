//! Closed-loop orchestration: offline design, online quantized DMPC, plant
//! simulation with disturbances, and logging.

pub mod benchmark;

use std::fs::File;
use std::path::Path;

use nalgebra::DVector;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use benchmark::{benchmark_random_qp, BenchmarkConfig, BenchmarkReport, BenchmarkRow, RandomQpInstance, Topology};

use crate::auv::{self, AuvParams, LinearModel, StateVector};
use crate::design::{
    estimate_rho, initial_solution, optimize_design, BoundParams, DesignOptions, DesignSearch, InitialSolution, QuantizationDesign,
    RhoEstimate, SolutionPathSampler,
};
use crate::dmpc::{DmpcProblem, DmpcSpec, TerminalWeight};
use crate::error::{Error, Result};
use crate::netqp::Parameter;
use crate::oracle;
use crate::solver::{inner_solve, Observer, ProjectionOptions, SolverConfig, SolverState};

/// Plant used to propagate the vehicles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlantKind {
    Linear,
    Nonlinear,
}

/// Where the disturbance enters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DisturbanceMode {
    /// Added to the plant state after each step.
    #[default]
    Process,
    /// Added to the measurement only.
    Measurement,
}

/// Uniform disturbance on positions (m) and Euler angles (rad).
#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisturbanceSpec {
    pub position: f64,
    pub angle: f64,
    #[serde(default)]
    pub mode: DisturbanceMode,
}

impl DisturbanceSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.position >= 0.0 && self.angle >= 0.0) {
            return Err(Error::InvalidParameter("disturbance bounds must be non-negative".into()));
        }
        Ok(())
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { position: self.position * s, angle: self.angle * s, mode: self.mode }
    }
}

/// Add independent uniform draws to the three positions and three angles.
pub fn inject_disturbance(state: &DVector<f64>, spec: &DisturbanceSpec, rng: &mut ChaCha8Rng) -> DVector<f64> {
    let mut out = state.clone();
    for k in 0..6.min(state.len()) {
        let b = if k < 3 { spec.position } else { spec.angle };
        if b > 0.0 {
            out[k] += rng.random_range(-b..=b);
        }
    }
    out
}

/// How `ρ` is obtained in the offline stage.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum RhoSource {
    Fixed { value: f64 },
    /// Closed-loop runs from initial positions perturbed uniformly by `spread`.
    Sampled { runs: usize, steps: usize, spread: f64 },
}

/// A multi-AUV formation experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct FormationScenario {
    pub auv: AuvParams,
    pub dmpc: DmpcSpec,
    pub initial_positions: Vec<[f64; 3]>,
    pub plant: PlantKind,
    pub disturbance: DisturbanceSpec,
    /// Closed-loop steps.
    pub steps: usize,
    pub seed: u64,
    /// `T`, bits per scalar channel per step.
    pub budget: u32,
    pub design_options: DesignOptions,
    pub rho: RhoSource,
    pub design_override: Option<QuantizationDesign<f64>>,
    /// Initial-solution tolerance when the design carries no bound.
    pub initial_tolerance: f64,
    /// Compute `z*(ζ^t)` every step for the sub-optimality log.
    pub track_suboptimality: bool,
    pub projection: ProjectionOptions,
}

impl FormationScenario {
    /// Linear plant, no disturbance, Riccati terminal weight, offline design.
    pub fn convergence() -> Self {
        let mut dmpc = DmpcSpec::three_auv();
        dmpc.terminal_weight = TerminalWeight::Riccati;
        Self {
            auv: AuvParams::default(),
            dmpc,
            initial_positions: vec![[-8.0, 0.5, -0.5], [-7.0, 1.5, 1.0], [-8.0, -0.5, -1.0]],
            plant: PlantKind::Linear,
            disturbance: DisturbanceSpec::default(),
            steps: 150,
            seed: 2024,
            budget: 100,
            design_options: DesignOptions::default(),
            rho: RhoSource::Sampled { runs: 20, steps: 150, spread: 0.5 },
            design_override: None,
            initial_tolerance: 1e-4,
            track_suboptimality: true,
            projection: ProjectionOptions::default(),
        }
    }

    /// Nonlinear plant with uniform disturbances and `P_i = Q_i`.
    pub fn disturbed() -> Self {
        let mut s = Self::convergence();
        s.dmpc.terminal_weight = TerminalWeight::Stage;
        s.plant = PlantKind::Nonlinear;
        s.disturbance = DisturbanceSpec { position: 0.1, angle: 0.03, mode: DisturbanceMode::Process };
        s
    }

    pub fn validate(&self) -> Result<()> {
        self.auv.validate()?;
        self.disturbance.validate()?;
        if self.initial_positions.is_empty() {
            return Err(Error::InvalidParameter("at least one vehicle is required".into()));
        }
        if self.steps == 0 || self.budget == 0 {
            return Err(Error::InvalidParameter("steps and budget must be positive".into()));
        }
        if !(self.initial_tolerance > 0.0) {
            return Err(Error::InvalidParameter("initial tolerance must be positive".into()));
        }
        Ok(())
    }

    pub fn initial_states(&self) -> Vec<DVector<f64>> {
        self.initial_positions.iter().map(position_state).collect()
    }

    pub fn linear_model(&self) -> Result<LinearModel> {
        auv::linearize_discretize(&self.auv)
    }

    pub fn build_problem(&self) -> Result<(DmpcProblem, Parameter)> {
        let model = self.linear_model()?;
        let models = vec![model; self.initial_positions.len()];
        crate::dmpc::build_distributed_qp(&self.dmpc, &models, &self.initial_states())
    }
}

fn position_state(p: &[f64; 3]) -> DVector<f64> {
    let mut x = DVector::zeros(auv::STATE_DIM);
    x[0] = p[0];
    x[1] = p[1];
    x[2] = p[2];
    x
}

fn stack_blocks(problem: &DmpcProblem, z: &DVector<f64>) -> Vec<DVector<f64>> {
    problem.problem().selectors().split(z)
}

/// `ρ` sampler driving the linear model with the exact MPC optimum.
struct FormationSampler<'a> {
    scenario: &'a FormationScenario,
    problem: &'a DmpcProblem,
    steps: usize,
    spread: f64,
}

impl SolutionPathSampler for FormationSampler<'_> {
    fn sample_path(&self, rng: &mut ChaCha8Rng) -> Result<Vec<DVector<f64>>> {
        let mut problem = self.problem.clone();
        let model = self.scenario.linear_model()?;
        let mut states: Vec<DVector<f64>> = self
            .scenario
            .initial_positions
            .iter()
            .map(|p| {
                let mut q = *p;
                for v in q.iter_mut() {
                    if self.spread > 0.0 {
                        *v += rng.random_range(-self.spread..=self.spread);
                    }
                }
                position_state(&q)
            })
            .collect();
        let mut path = Vec::with_capacity(self.steps);
        for _ in 0..self.steps {
            let zeta = problem.update(&states)?;
            let z = oracle::solve_centralized(problem.problem(), &zeta)?;
            let blocks = stack_blocks(&problem, &z);
            for (i, x) in states.iter_mut().enumerate() {
                let u = problem.extract_control(i, &blocks[i])?;
                *x = model.step(x, &u);
            }
            path.push(z);
        }
        Ok(path)
    }
}

/// Sample `ρ` for `scenario` from oracle-driven runs of the linear model.
pub fn formation_rho(scenario: &FormationScenario, runs: usize, steps: usize, spread: f64) -> Result<RhoEstimate> {
    scenario.validate()?;
    let (problem, _) = scenario.build_problem()?;
    estimate_rho(&FormationSampler { scenario, problem: &problem, steps, spread }, runs, scenario.seed)
}

/// Result of the offline stage.
#[derive(Debug, Clone)]
pub struct OfflineStage {
    pub problem: DmpcProblem,
    pub zeta: Parameter,
    pub params: BoundParams<f64>,
    pub rho: Option<RhoEstimate>,
    pub search: Option<DesignSearch<f64>>,
    pub design: QuantizationDesign<f64>,
    pub initial: InitialSolution,
}

/// Build the QP, read its constants, estimate `ρ`, optimize the design and
/// compute the initial solution.
pub fn offline_stage(scenario: &FormationScenario) -> Result<OfflineStage> {
    scenario.validate()?;
    let (problem, zeta) = scenario.build_problem()?;
    let tau = SolverConfig::default_step(problem.problem());
    let (rho_value, rho) = match (&scenario.design_override, scenario.rho) {
        (Some(_), _) => (0.0, None),
        (None, RhoSource::Fixed { value }) => (value, None),
        (None, RhoSource::Sampled { runs, steps, spread }) => {
            let sampler = FormationSampler { scenario, problem: &problem, steps, spread };
            let est = estimate_rho(&sampler, runs, scenario.seed)?;
            (est.pairwise, Some(est))
        }
    };
    let params = BoundParams::from_problem(problem.problem(), rho_value, tau, scenario.budget);
    let (design, search) = match scenario.design_override {
        Some(d) => (d, None),
        None => {
            let s = optimize_design(&params, &scenario.design_options)?;
            (s.best, Some(s))
        }
    };
    let tol = if design.epsilon.is_finite() && design.epsilon > 0.0 { design.epsilon } else { scenario.initial_tolerance };
    let initial = initial_solution(problem.problem(), &zeta, tol, None, 1_000_000)?;
    Ok(OfflineStage { problem, zeta, params, rho, search, design, initial })
}

/// One logged closed-loop step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: usize,
    pub time: f64,
    /// Plant states at the start of the step.
    pub states: Vec<DVector<f64>>,
    pub inputs: Vec<DVector<f64>>,
    /// `‖z^{t,K+1} − z*(ζ^t)‖` in solver coordinates.
    pub suboptimality: Option<f64>,
    /// Payload bits per scalar channel, `n(K+1)`.
    pub bits_per_scalar: u64,
    pub total_bits: u64,
    pub saturations: usize,
    /// Largest constraint violation over every iterate of the step.
    pub violation: f64,
    /// Largest input-box violation of the applied inputs.
    pub input_violation: f64,
    /// Per formation edge, `(p_from − p_to) − offset`.
    pub formation_errors: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ClosedLoopLog {
    pub dt: f64,
    pub records: Vec<StepRecord>,
    /// Plant states after the last step.
    pub final_states: Vec<DVector<f64>>,
}

impl ClosedLoopLog {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Position distance of `agent` from `setpoint` at every step start.
    pub fn distance_to(&self, agent: usize, setpoint: &[f64; 3]) -> Vec<(f64, f64)> {
        self.records
            .iter()
            .map(|r| {
                let x = &r.states[agent];
                let d = ((x[0] - setpoint[0]).powi(2) + (x[1] - setpoint[1]).powi(2) + (x[2] - setpoint[2]).powi(2)).sqrt();
                (r.time, d)
            })
            .collect()
    }

    /// Earliest time after which the distance stays below `threshold`.
    pub fn settling_time(&self, agent: usize, setpoint: &[f64; 3], threshold: f64) -> Option<f64> {
        let d = self.distance_to(agent, setpoint);
        let mut settle = None;
        for &(t, v) in d.iter().rev() {
            if v < threshold {
                settle = Some(t);
            } else {
                break;
            }
        }
        settle
    }

    pub fn median_suboptimality(&self) -> Option<f64> {
        let mut v: Vec<f64> = self.records.iter().filter_map(|r| r.suboptimality).collect();
        if v.is_empty() {
            return None;
        }
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = v.len();
        Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
    }

    /// Formation error of `edge` on `axis` at the first step with `time ≥ at`.
    pub fn formation_error_at(&self, at: f64, edge: usize, axis: usize) -> Option<f64> {
        self.records
            .iter()
            .find(|r| r.time >= at - 1e-9)
            .map(|r| r.formation_errors[edge][axis])
    }

    /// Largest formation-error norm over steps with `time ≥ from`.
    pub fn formation_band(&self, from: f64) -> f64 {
        self.records
            .iter()
            .filter(|r| r.time >= from - 1e-9)
            .flat_map(|r| r.formation_errors.iter().map(|e| (e[0] * e[0] + e[1] * e[1] + e[2] * e[2]).sqrt()))
            .fold(0.0, f64::max)
    }

    pub fn max_violation(&self) -> f64 {
        self.records.iter().map(|r| r.violation).fold(0.0, f64::max)
    }

    pub fn max_input_violation(&self) -> f64 {
        self.records.iter().map(|r| r.input_violation).fold(0.0, f64::max)
    }

    /// `t,time,agent,x0..x11,u0..u7`.
    pub fn write_trajectory_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_writer(File::create(path)?);
        let mut header = vec!["t".to_string(), "time".into(), "agent".into()];
        if let Some(r) = self.records.first() {
            header.extend((0..r.states[0].len()).map(|k| format!("x{k}")));
            header.extend((0..r.inputs[0].len()).map(|k| format!("u{k}")));
        }
        w.write_record(&header)?;
        for r in &self.records {
            for (i, (x, u)) in r.states.iter().zip(&r.inputs).enumerate() {
                let mut row = vec![r.t.to_string(), format!("{}", r.time), i.to_string()];
                row.extend(x.iter().map(|v| format!("{v:e}")));
                row.extend(u.iter().map(|v| format!("{v:e}")));
                w.write_record(&row)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// `t,time,suboptimality,bits_per_scalar,total_bits,saturations,violation,input_violation`.
    pub fn write_suboptimality_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_writer(File::create(path)?);
        w.write_record(["t", "time", "suboptimality", "bits_per_scalar", "total_bits", "saturations", "violation", "input_violation"])?;
        for r in &self.records {
            w.write_record([
                r.t.to_string(),
                format!("{}", r.time),
                r.suboptimality.map(|v| format!("{v:e}")).unwrap_or_default(),
                r.bits_per_scalar.to_string(),
                r.total_bits.to_string(),
                r.saturations.to_string(),
                format!("{:e}", r.violation),
                format!("{:e}", r.input_violation),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// `t,time,edge,err_x,err_y,err_z`.
    pub fn write_formation_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_writer(File::create(path)?);
        w.write_record(["t", "time", "edge", "err_x", "err_y", "err_z"])?;
        for r in &self.records {
            for (e, err) in r.formation_errors.iter().enumerate() {
                w.write_record([
                    r.t.to_string(),
                    format!("{}", r.time),
                    e.to_string(),
                    format!("{:e}", err[0]),
                    format!("{:e}", err[1]),
                    format!("{:e}", err[2]),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

struct ViolationObserver<'a> {
    problem: &'a DmpcProblem,
    worst: f64,
}

impl Observer for ViolationObserver<'_> {
    fn on_iterate(&mut self, _round: usize, agent: usize, iterate: &DVector<f64>) {
        let v = self.problem.problem().constraint(agent).violation(iterate);
        self.worst = self.worst.max(v);
    }
}

/// The online part of the loop: solver state, plant and disturbance stream.
pub struct ClosedLoop<'a> {
    scenario: &'a FormationScenario,
    problem: DmpcProblem,
    model: LinearModel,
    config: SolverConfig,
    solver: SolverState,
    plant: Vec<DVector<f64>>,
    rng: ChaCha8Rng,
    t: usize,
}

impl<'a> ClosedLoop<'a> {
    pub fn new(scenario: &'a FormationScenario, offline: &OfflineStage) -> Result<Self> {
        let problem = offline.problem.clone();
        let design = offline.design;
        let mut config = SolverConfig::quantized(problem.problem(), design.iterations as usize, design.quantizer_settings());
        config.projection = scenario.projection;
        let solver = SolverState::new(problem.problem(), &offline.initial.z, &offline.zeta, &config.projection)?;
        Ok(Self {
            scenario,
            problem,
            model: scenario.linear_model()?,
            config,
            solver,
            plant: scenario.initial_states(),
            rng: ChaCha8Rng::seed_from_u64(scenario.seed),
            t: 0,
        })
    }

    pub fn plant_states(&self) -> &[DVector<f64>] {
        &self.plant
    }

    pub fn problem(&self) -> &DmpcProblem {
        &self.problem
    }

    /// Measure, solve, apply and propagate one step.
    pub fn online_step(&mut self) -> Result<StepRecord> {
        let sc = self.scenario;
        let measured: Vec<DVector<f64>> = match sc.disturbance.mode {
            DisturbanceMode::Process => self.plant.clone(),
            DisturbanceMode::Measurement => {
                self.plant.iter().map(|x| inject_disturbance(x, &sc.disturbance, &mut self.rng)).collect()
            }
        };
        let zeta = self.problem.update(&measured)?;
        let reference = if sc.track_suboptimality { Some(oracle::solve_centralized(self.problem.problem(), &zeta)?) } else { None };
        let mut obs = ViolationObserver { problem: &self.problem, worst: 0.0 };
        let report = inner_solve(self.problem.problem(), &self.config, &mut self.solver, &zeta, reference.as_ref(), &mut obs)?;
        let violation = obs.worst;
        let spec = self.problem.spec();
        let mut inputs = Vec::with_capacity(self.plant.len());
        let mut input_violation: f64 = 0.0;
        for (i, w) in report.iterates.iter().enumerate() {
            let u = self.problem.extract_control(i, w)?;
            for k in 0..u.len() {
                input_violation = input_violation.max(spec.input_lower[k] - u[k]).max(u[k] - spec.input_upper[k]);
            }
            inputs.push(u);
        }
        let record = StepRecord {
            t: self.t,
            time: self.t as f64 * self.model.dt,
            states: self.plant.clone(),
            inputs: inputs.clone(),
            suboptimality: report.suboptimality,
            bits_per_scalar: report.bits_per_scalar,
            total_bits: report.total_bits(),
            saturations: report.total_saturations(),
            violation,
            input_violation,
            formation_errors: formation_errors(spec, &self.plant),
        };
        for (x, u) in self.plant.iter_mut().zip(&inputs) {
            let next = match sc.plant {
                PlantKind::Linear => self.model.step(x, u),
                PlantKind::Nonlinear => {
                    let s = StateVector::from_column_slice(x.as_slice());
                    let uu = auv::InputVector::from_column_slice(u.as_slice());
                    DVector::from_column_slice(auv::integrate(&sc.auv, &s, &uu, sc.auv.dt)?.as_slice())
                }
            };
            *x = match sc.disturbance.mode {
                DisturbanceMode::Process => inject_disturbance(&next, &sc.disturbance, &mut self.rng),
                DisturbanceMode::Measurement => next,
            };
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteState);
            }
        }
        self.t += 1;
        Ok(record)
    }
}

/// Per-edge formation errors of the given plant states.
pub fn formation_errors(spec: &DmpcSpec, states: &[DVector<f64>]) -> Vec<[f64; 3]> {
    spec.edges
        .iter()
        .map(|e| {
            let mut err = [0.0; 3];
            for (k, &c) in spec.position_coords.iter().enumerate() {
                err[k] = states[e.from][c] - states[e.to][c] - e.offset[k];
            }
            err
        })
        .collect()
}

/// Full offline and online run. `design` overrides the scenario's design choice.
pub fn run_closed_loop(scenario: &FormationScenario, design: Option<QuantizationDesign<f64>>) -> Result<(OfflineStage, ClosedLoopLog)> {
    let mut sc = scenario.clone();
    if design.is_some() {
        sc.design_override = design;
    }
    let offline = offline_stage(&sc)?;
    let log = run_online(&sc, &offline)?;
    Ok((offline, log))
}

/// Online stage only, from a finished offline stage.
pub fn run_online(scenario: &FormationScenario, offline: &OfflineStage) -> Result<ClosedLoopLog> {
    let mut cl = ClosedLoop::new(scenario, offline)?;
    let mut log = ClosedLoopLog { dt: scenario.auv.dt, ..Default::default() };
    for _ in 0..scenario.steps {
        log.records.push(cl.online_step()?);
    }
    log.final_states = cl.plant.clone();
    Ok(log)
}
