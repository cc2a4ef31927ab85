//! Offline quantities: the drift bound `ρ` and the initial solution.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::netqp::{DistributedProblem, Parameter};
use crate::oracle;
use crate::solver::{inner_solve, NoObserver, SolverConfig, SolverState};

/// Source of closed-loop optimal-solution sequences `z*(ζ⁰), z*(ζ¹), …`.
pub trait SolutionPathSampler: Sync {
    /// Simulate one run from a random admissible initial state drawn from `rng`.
    fn sample_path(&self, rng: &mut ChaCha8Rng) -> Result<Vec<DVector<f64>>>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct RhoEstimate {
    /// Largest distance between any two sampled optima.
    pub pairwise: f64,
    /// Largest distance between optima of consecutive steps within one run.
    pub consecutive: f64,
    pub runs: usize,
    pub samples: usize,
}

/// Sample `runs` solution paths (run `r` uses seed `seed + r`) and measure their spread.
pub fn estimate_rho<S: SolutionPathSampler>(sampler: &S, runs: usize, seed: u64) -> Result<RhoEstimate> {
    if runs == 0 {
        return Err(Error::InvalidParameter("at least one run is required".into()));
    }
    let paths: Vec<Vec<DVector<f64>>> = (0..runs)
        .into_par_iter()
        .map(|r| sampler.sample_path(&mut ChaCha8Rng::seed_from_u64(seed.wrapping_add(r as u64))))
        .collect::<Result<_>>()?;
    let consecutive = paths
        .iter()
        .flat_map(|p| p.windows(2).map(|w| (&w[1] - &w[0]).norm()))
        .fold(0.0, f64::max);
    let all: Vec<&DVector<f64>> = paths.iter().flatten().collect();
    let pairwise = (0..all.len())
        .into_par_iter()
        .map(|i| all[i + 1..].iter().map(|z| (*z - all[i]).norm()).fold(0.0, f64::max))
        .reduce(|| 0.0, f64::max);
    Ok(RhoEstimate { pairwise, consecutive, runs, samples: all.len() })
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitialSolution {
    pub z: DVector<f64>,
    /// Pass-through rounds spent.
    pub iterations: usize,
    /// `‖z − z*‖`.
    pub distance: f64,
}

/// Run pass-through rounds from `warm` (zero when absent) until the iterate is
/// within `ε/2` of the centralized optimum.
pub fn initial_solution(
    problem: &DistributedProblem,
    zeta: &Parameter,
    epsilon: f64,
    warm: Option<&DVector<f64>>,
    max_iterations: usize,
) -> Result<InitialSolution> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidParameter("ε must be positive".into()));
    }
    let target = oracle::solve_centralized(problem, zeta)?;
    let z0 = warm.cloned().unwrap_or_else(|| DVector::zeros(problem.dim()));
    let goal = 0.5 * epsilon;
    let d0 = (&z0 - &target).norm();
    if d0 <= goal && problem.violation(&z0) <= 1e-9 {
        return Ok(InitialSolution { z: z0, iterations: 0, distance: d0 });
    }
    let config = SolverConfig::pass_through(problem, 0);
    let mut state = SolverState::new(problem, &z0, zeta, &config.projection)?;
    let mut distance = d0;
    for it in 1..=max_iterations {
        let report = inner_solve(problem, &config, &mut state, zeta, Some(&target), &mut NoObserver)?;
        distance = report.suboptimality.unwrap_or(f64::INFINITY);
        if distance <= goal {
            return Ok(InitialSolution { z: report.global_iterate(), iterations: it, distance });
        }
    }
    Err(Error::BudgetExceeded(format!(
        "initial solution still {distance:.3e} from the optimum after {max_iterations} rounds"
    )))
}
