//! TOML run configuration shared by every front end.
//!
//! One file holds a schema version, the run seed and any of three sections:
//! `design` (bound constants or a serialized problem), `benchmark` and
//! `formation`. Unknown keys are rejected and missing keys are reported by name.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::auv::{AuvParams, INPUT_DIM, STATE_DIM};
use crate::design::{BoundParams, DesignOptions, QuantizationDesign};
use crate::dmpc::{DmpcSpec, FormationEdge, TerminalWeight};
use crate::error::{Error, Result};
use crate::netqp::{AffineBoxSet, DistributedProblem, Ellipsoid, Graph, LocalConstraintSet, LocalCost};
use crate::sim::benchmark::BenchmarkConfig;
use crate::sim::{DisturbanceSpec, FormationScenario, PlantKind, RhoSource};
use crate::solver::{ProjectionOptions, SolverConfig};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    /// Every random draw of the run derives from this seed.
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub design: Option<DesignConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub benchmark: Option<BenchmarkConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub formation: Option<FormationConfig>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if let Some(d) = &self.design {
            d.validate()?;
        }
        Ok(())
    }

    /// Design over the random-QP benchmark constants.
    pub fn design_preset() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            seed: 0,
            design: Some(DesignConfig {
                params: Some(BoundParams {
                    agents: 6,
                    degree: 2,
                    max_local_dim: 2,
                    lipschitz: 21.99,
                    lipschitz_max: 16.54,
                    strong_convexity: 15.93,
                    rho: 8.42,
                    step_size: 0.9 / 21.99,
                    budget: 100,
                }),
                problem: None,
                options: DesignOptions::default(),
            }),
            benchmark: None,
            formation: None,
        }
    }

    pub fn benchmark_preset() -> Self {
        Self { schema_version: SCHEMA_VERSION, seed: 0, design: None, benchmark: Some(BenchmarkConfig::default()), formation: None }
    }

    pub fn formation_preset(scenario: &FormationScenario) -> Result<Self> {
        Ok(Self {
            schema_version: SCHEMA_VERSION,
            seed: scenario.seed,
            design: None,
            benchmark: None,
            formation: Some(FormationConfig::from_scenario(scenario)?),
        })
    }
}

/// Inputs to the design search: either the bound constants directly or a
/// problem from which they are read.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<BoundParams<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem: Option<ProblemDesign>,
    pub options: DesignOptions,
}

impl DesignConfig {
    pub fn validate(&self) -> Result<()> {
        match (&self.params, &self.problem) {
            (Some(_), None) | (None, Some(_)) => Ok(()),
            _ => Err(Error::Config("design needs exactly one of `params` or `problem`".into())),
        }
    }

    pub fn bound_params(&self) -> Result<BoundParams<f64>> {
        self.validate()?;
        if let Some(p) = self.params {
            return Ok(p);
        }
        let pd = self.problem.as_ref().expect("validated");
        let problem = pd.problem.build()?;
        let step = pd.step.unwrap_or_else(|| SolverConfig::default_step(&problem));
        Ok(BoundParams::from_problem(&problem, pd.rho, step, pd.budget))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemDesign {
    pub rho: f64,
    /// Bits per scalar channel per time step.
    pub budget: u32,
    /// Gradient step; `1/L` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
    pub problem: ProblemConfig,
}

/// Serialized distributed QP. Matrices are dense and row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub agents: usize,
    /// Undirected edges, zero-based.
    pub edges: Vec<[usize; 2]>,
    pub costs: Vec<CostConfig>,
    pub constraints: Vec<ConstraintConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostConfig {
    /// Neighbourhood dimension `m_{N_i}`.
    pub dim: usize,
    pub hessian: Vec<f64>,
    /// Rows of `h_i`; zero for a parameter-free cost.
    pub param_dim: usize,
    pub param_map: Vec<f64>,
    pub offset: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case", tag = "kind")]
pub enum ConstraintConfig {
    Box {
        lower: Vec<f64>,
        upper: Vec<f64>,
    },
    Polytope {
        rows: usize,
        g: Vec<f64>,
        h: Vec<f64>,
    },
    AffineBox {
        rows: usize,
        aeq: Vec<f64>,
        beq: Vec<f64>,
        lower: Vec<f64>,
        upper: Vec<f64>,
    },
    AffineBoxEllipsoid {
        rows: usize,
        aeq: Vec<f64>,
        beq: Vec<f64>,
        lower: Vec<f64>,
        upper: Vec<f64>,
        coords: Vec<usize>,
        center: Vec<f64>,
        shape: Vec<f64>,
        level: f64,
    },
}

fn matrix(rows: usize, cols: usize, data: &[f64], what: &str) -> Result<DMatrix<f64>> {
    if data.len() != rows * cols {
        return Err(Error::Config(format!("{what}: expected {rows}x{cols} = {} entries, got {}", rows * cols, data.len())));
    }
    Ok(DMatrix::from_row_slice(rows, cols, data))
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

fn affine(rows: usize, aeq: &[f64], beq: &[f64], lower: &[f64], upper: &[f64], what: &str) -> Result<AffineBoxSet> {
    let a = matrix(rows, lower.len(), aeq, what)?;
    AffineBoxSet::new(a, DVector::from_column_slice(beq), DVector::from_column_slice(lower), DVector::from_column_slice(upper))
}

impl ConstraintConfig {
    fn build(&self, what: &str) -> Result<LocalConstraintSet> {
        match self {
            Self::Box { lower, upper } => {
                LocalConstraintSet::boxed(DVector::from_column_slice(lower), DVector::from_column_slice(upper))
            }
            Self::Polytope { rows, g, h } => {
                if *rows == 0 || g.len() % rows != 0 {
                    return Err(Error::Config(format!("{what}: {} entries do not form {rows} rows", g.len())));
                }
                LocalConstraintSet::polytope(matrix(*rows, g.len() / rows, g, what)?, DVector::from_column_slice(h))
            }
            Self::AffineBox { rows, aeq, beq, lower, upper } => {
                Ok(LocalConstraintSet::AffineIntersectBox(affine(*rows, aeq, beq, lower, upper, what)?))
            }
            Self::AffineBoxEllipsoid { rows, aeq, beq, lower, upper, coords, center, shape, level } => {
                let set = affine(*rows, aeq, beq, lower, upper, what)?;
                let k = coords.len();
                let e = Ellipsoid::new(coords.clone(), DVector::from_column_slice(center), matrix(k, k, shape, what)?, *level)?;
                LocalConstraintSet::affine_box_ellipsoid(set, e)
            }
        }
    }

    fn from_set(set: &LocalConstraintSet) -> Self {
        let aff = |a: &AffineBoxSet| {
            (a.aeq.nrows(), row_major(&a.aeq), a.beq.as_slice().to_vec(), a.bounds.lower.as_slice().to_vec(), a.bounds.upper.as_slice().to_vec())
        };
        match set {
            LocalConstraintSet::Box(b) => Self::Box { lower: b.lower.as_slice().to_vec(), upper: b.upper.as_slice().to_vec() },
            LocalConstraintSet::Polytope(p) => Self::Polytope { rows: p.g.nrows(), g: row_major(&p.g), h: p.h.as_slice().to_vec() },
            LocalConstraintSet::AffineIntersectBox(a) => {
                let (rows, aeq, beq, lower, upper) = aff(a);
                Self::AffineBox { rows, aeq, beq, lower, upper }
            }
            LocalConstraintSet::AffineBoxEllipsoid(a, e) => {
                let (rows, aeq, beq, lower, upper) = aff(a);
                Self::AffineBoxEllipsoid {
                    rows,
                    aeq,
                    beq,
                    lower,
                    upper,
                    coords: e.coords.clone(),
                    center: e.center.as_slice().to_vec(),
                    shape: row_major(&e.shape),
                    level: e.level,
                }
            }
        }
    }
}

impl ProblemConfig {
    pub fn build(&self) -> Result<DistributedProblem> {
        let edges: Vec<(usize, usize)> = self.edges.iter().map(|e| (e[0], e[1])).collect();
        let graph = Graph::new(self.agents, &edges)?;
        let costs = self
            .costs
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let what = format!("costs[{i}]");
                LocalCost::new(
                    matrix(c.dim, c.dim, &c.hessian, &what)?,
                    matrix(c.param_dim, c.dim, &c.param_map, &what)?,
                    DVector::from_column_slice(&c.offset),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let constraints = self
            .constraints
            .iter()
            .enumerate()
            .map(|(i, c)| c.build(&format!("constraints[{i}]")))
            .collect::<Result<Vec<_>>>()?;
        DistributedProblem::build(graph, costs, constraints)
    }

    pub fn from_problem(problem: &DistributedProblem) -> Self {
        let costs = (0..problem.agent_count())
            .map(|i| {
                let c = problem.cost(i);
                CostConfig {
                    dim: c.dim(),
                    hessian: row_major(&c.hessian),
                    param_dim: c.param_dim(),
                    param_map: row_major(&c.param_map),
                    offset: c.offset.as_slice().to_vec(),
                }
            })
            .collect();
        Self {
            agents: problem.agent_count(),
            edges: problem.graph().edges().iter().map(|&(a, b)| [a, b]).collect(),
            costs,
            constraints: problem.constraints().iter().map(ConstraintConfig::from_set).collect(),
        }
    }
}

/// Multi-AUV formation run. Weights are diagonals; positions in metres,
/// angles in radians, inputs in newtons.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FormationConfig {
    pub auv: AuvParams,
    pub horizon: usize,
    /// Diagonal of `Q_i` (12 entries).
    pub state_weight: Vec<f64>,
    /// Diagonal of `R_i` (8 entries).
    pub input_weight: Vec<f64>,
    pub terminal_weight: TerminalWeight,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub terminal_level: Option<f64>,
    pub leader: usize,
    pub setpoint: [f64; 3],
    pub edges: Vec<FormationEdge>,
    pub state_lower: Vec<f64>,
    pub state_upper: Vec<f64>,
    pub input_lower: Vec<f64>,
    pub input_upper: Vec<f64>,
    /// Jacobi-scale the QP before solving.
    pub scaling: bool,
    pub initial_positions: Vec<[f64; 3]>,
    pub plant: PlantKind,
    pub disturbance: DisturbanceSpec,
    pub steps: usize,
    /// Bits per scalar channel per step.
    pub budget: u32,
    pub design_options: DesignOptions,
    pub rho: RhoSource,
    /// Skip the offline search and use this design.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub design: Option<QuantizationDesign<f64>>,
    /// Second design for a paired run on the same disturbance sequence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compare: Option<QuantizationDesign<f64>>,
    pub initial_tolerance: f64,
    pub track_suboptimality: bool,
    pub projection: ProjectionOptions,
}

fn diagonal(m: &DMatrix<f64>, what: &str) -> Result<Vec<f64>> {
    let off = DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| if i == j { 0.0 } else { m[(i, j)] });
    if off.amax() > 0.0 {
        return Err(Error::Config(format!("{what} is not diagonal")));
    }
    Ok(m.diagonal().as_slice().to_vec())
}

fn vector(v: &[f64], len: usize, what: &str) -> Result<DVector<f64>> {
    if v.len() != len {
        return Err(Error::Config(format!("{what}: expected {len} entries, got {}", v.len())));
    }
    Ok(DVector::from_column_slice(v))
}

impl FormationConfig {
    pub fn from_scenario(s: &FormationScenario) -> Result<Self> {
        let d = &s.dmpc;
        Ok(Self {
            auv: s.auv,
            horizon: d.horizon,
            state_weight: diagonal(&d.state_weight, "state_weight")?,
            input_weight: diagonal(&d.input_weight, "input_weight")?,
            terminal_weight: d.terminal_weight,
            terminal_level: d.terminal_level,
            leader: d.leader,
            setpoint: d.setpoint,
            edges: d.edges.clone(),
            state_lower: d.state_lower.as_slice().to_vec(),
            state_upper: d.state_upper.as_slice().to_vec(),
            input_lower: d.input_lower.as_slice().to_vec(),
            input_upper: d.input_upper.as_slice().to_vec(),
            scaling: d.scaling,
            initial_positions: s.initial_positions.clone(),
            plant: s.plant,
            disturbance: s.disturbance,
            steps: s.steps,
            budget: s.budget,
            design_options: s.design_options,
            rho: s.rho,
            design: s.design_override,
            compare: None,
            initial_tolerance: s.initial_tolerance,
            track_suboptimality: s.track_suboptimality,
            projection: s.projection,
        })
    }

    pub fn scenario(&self, seed: u64) -> Result<FormationScenario> {
        let dmpc = DmpcSpec {
            horizon: self.horizon,
            state_weight: DMatrix::from_diagonal(&vector(&self.state_weight, STATE_DIM, "state_weight")?),
            input_weight: DMatrix::from_diagonal(&vector(&self.input_weight, INPUT_DIM, "input_weight")?),
            terminal_weight: self.terminal_weight,
            terminal_level: self.terminal_level,
            leader: self.leader,
            setpoint: self.setpoint,
            edges: self.edges.clone(),
            position_coords: [0, 1, 2],
            state_lower: vector(&self.state_lower, STATE_DIM, "state_lower")?,
            state_upper: vector(&self.state_upper, STATE_DIM, "state_upper")?,
            input_lower: vector(&self.input_lower, INPUT_DIM, "input_lower")?,
            input_upper: vector(&self.input_upper, INPUT_DIM, "input_upper")?,
            scaling: self.scaling,
        };
        let s = FormationScenario {
            auv: self.auv,
            dmpc,
            initial_positions: self.initial_positions.clone(),
            plant: self.plant,
            disturbance: self.disturbance,
            steps: self.steps,
            seed,
            budget: self.budget,
            design_options: self.design_options,
            rho: self.rho,
            design_override: self.design,
            initial_tolerance: self.initial_tolerance,
            track_suboptimality: self.track_suboptimality,
            projection: self.projection,
        };
        s.validate()?;
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_round_trip() {
        let mut paired = RunConfig::formation_preset(&FormationScenario::disturbed()).unwrap();
        let f = paired.formation.as_mut().unwrap();
        f.design = Some(QuantizationDesign::manual(0.51, 20, 5, 65.85, 66.23));
        f.compare = Some(QuantizationDesign::manual(0.95, 30, 3, 693.51, 693.72));
        for cfg in [
            RunConfig::design_preset(),
            RunConfig::benchmark_preset(),
            RunConfig::formation_preset(&FormationScenario::convergence()).unwrap(),
            paired,
        ] {
            let text = cfg.to_toml().unwrap();
            let back = RunConfig::parse(&text).unwrap();
            // NaN bounds of manual designs never compare equal.
            assert_eq!(back.to_toml().unwrap(), text);
        }
    }

    #[test]
    fn scenario_survives_conversion() {
        let s = FormationScenario::convergence();
        let f = FormationConfig::from_scenario(&s).unwrap();
        assert_eq!(f.scenario(s.seed).unwrap(), s);
    }

    #[test]
    fn missing_field_is_named() {
        let mut text = RunConfig::benchmark_preset().to_toml().unwrap();
        text = text.lines().filter(|l| !l.starts_with("rho_samples")).collect::<Vec<_>>().join("\n");
        let err = RunConfig::parse(&text).unwrap_err().to_string();
        assert!(err.contains("rho_samples"), "{err}");
    }

    #[test]
    fn unknown_field_rejected() {
        let text = format!("{}\nextra = 1\n", RunConfig::design_preset().to_toml().unwrap());
        assert!(RunConfig::parse(&text).is_err());
    }

    #[test]
    fn schema_version_checked() {
        let mut cfg = RunConfig::design_preset();
        cfg.schema_version = 99;
        assert!(RunConfig::parse(&cfg.to_toml().unwrap()).is_err());
    }

    #[test]
    fn design_needs_one_source() {
        let mut cfg = RunConfig::design_preset();
        cfg.design.as_mut().unwrap().params = None;
        assert!(cfg.validate().is_err());
    }
}
