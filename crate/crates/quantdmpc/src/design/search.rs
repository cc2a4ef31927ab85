//! Grid search over `(κ, n, K)` and design reports.

use std::fmt::Write as _;
use std::fs::File;
use std::path::Path;

use rayon::prelude::*;

use super::{solve_subproblem, BoundParams, CoefficientReading, QuantizationDesign};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Placement of the `κ` grid inside `(1 − γ, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KappaGrid {
    /// `1 − γ + λ, 1 − γ + 2λ, …` up to `1 − λ`.
    #[default]
    Offset,
    /// Multiples of `λ` strictly inside the interval.
    Multiples,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignOptions {
    /// Grid resolution `λ`.
    pub resolution: f64,
    pub kappa_grid: KappaGrid,
    pub reading: CoefficientReading,
    /// Also try every `K < ⌊T/n⌋`.
    pub all_iterations: bool,
}

impl Default for DesignOptions {
    fn default() -> Self {
        Self { resolution: 0.01, kappa_grid: KappaGrid::Offset, reading: CoefficientReading::Ratio, all_iterations: false }
    }
}

/// One evaluated grid configuration.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct GridPoint<T> {
    pub kappa: T,
    pub bits: u32,
    pub iterations: u32,
    pub c_alpha: Option<T>,
    pub c_beta: Option<T>,
    pub epsilon: Option<T>,
    pub feasible: bool,
}

/// Outcome of [`optimize_design`].
#[derive(Debug, Clone, PartialEq)]
pub struct DesignSearch<T> {
    pub params: BoundParams<T>,
    pub options: DesignOptions,
    pub kappas: Vec<T>,
    pub grid: Vec<GridPoint<T>>,
    pub best: QuantizationDesign<T>,
}

/// `κ` values of the grid.
pub fn kappa_grid<T: Scalar>(gamma: T, options: &DesignOptions) -> Result<Vec<T>> {
    let lambda = options.resolution;
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::InvalidParameter(format!("grid resolution must lie in (0, 1), got {lambda}")));
    }
    let lo = 1.0 - gamma.as_f64();
    let mut out = Vec::new();
    match options.kappa_grid {
        KappaGrid::Offset => {
            let mut j = 1usize;
            loop {
                let k = lo + j as f64 * lambda;
                if k > 1.0 - lambda + 1e-12 {
                    break;
                }
                out.push(T::lit(k));
                j += 1;
            }
        }
        KappaGrid::Multiples => {
            let mut j = (lo / lambda).floor() as usize;
            loop {
                let k = j as f64 * lambda;
                if k >= 1.0 - 1e-12 {
                    break;
                }
                if k > lo + 1e-12 {
                    out.push(T::lit(k));
                }
                j += 1;
            }
        }
    }
    Ok(out)
}

fn evaluate<T: Scalar>(params: &BoundParams<T>, kappa: T, bits: u32, iterations: u32, reading: CoefficientReading) -> GridPoint<T> {
    match solve_subproblem(params, kappa, bits, iterations, reading) {
        Ok(s) => GridPoint {
            kappa,
            bits,
            iterations,
            c_alpha: Some(s.c_alpha),
            c_beta: Some(s.c_beta),
            epsilon: Some(s.epsilon),
            feasible: true,
        },
        Err(_) => GridPoint { kappa, bits, iterations, c_alpha: None, c_beta: None, epsilon: None, feasible: false },
    }
}

/// Scan `n ∈ 1..=T`, `K = ⌊T/n⌋` (or all `K ≤ ⌊T/n⌋`) and the `κ` grid, and keep
/// the feasible design with the smallest `ε`. Ties go to the smaller `n`, then
/// the smaller `κ`, then the smaller `K`.
pub fn optimize_design<T: Scalar>(params: &BoundParams<T>, options: &DesignOptions) -> Result<DesignSearch<T>> {
    params.validate()?;
    let kappas = kappa_grid(params.gamma(), options)?;
    let mut configs = Vec::new();
    for bits in 1..=params.budget {
        let kmax = params.budget / bits;
        let ks: Vec<u32> = if options.all_iterations { (1..=kmax).collect() } else { vec![kmax] };
        for &k in &ks {
            for &kappa in &kappas {
                configs.push((kappa, bits, k));
            }
        }
    }
    let grid: Vec<GridPoint<T>> =
        configs.par_iter().map(|&(kappa, bits, k)| evaluate(params, kappa, bits, k, options.reading)).collect();
    let mut best: Option<&GridPoint<T>> = None;
    for g in grid.iter().filter(|g| g.feasible) {
        let better = match best {
            None => true,
            Some(b) => {
                let (e, be) = (g.epsilon.unwrap(), b.epsilon.unwrap());
                e < be
                    || (e == be
                        && (g.bits < b.bits
                            || (g.bits == b.bits && (g.kappa < b.kappa || (g.kappa == b.kappa && g.iterations < b.iterations)))))
            }
        };
        if better {
            best = Some(g);
        }
    }
    let b = best.ok_or(Error::NoFeasibleDesign)?;
    let best = QuantizationDesign {
        kappa: b.kappa,
        bits: b.bits,
        iterations: b.iterations,
        c_alpha: b.c_alpha.unwrap(),
        c_beta: b.c_beta.unwrap(),
        epsilon: b.epsilon.unwrap(),
        feasible: true,
    };
    Ok(DesignSearch { params: *params, options: *options, kappas, grid, best })
}

impl<T: Scalar> DesignSearch<T> {
    /// `ε(n)` at fixed `κ` (index into [`kappas`](Self::kappas)), `K = ⌊T/n⌋`.
    pub fn curve_over_bits(&self, kappa: T) -> Vec<(u32, Option<T>)> {
        let mut rows: Vec<_> = self
            .grid
            .iter()
            .filter(|g| g.kappa == kappa && g.iterations == self.params.budget / g.bits)
            .map(|g| (g.bits, g.epsilon))
            .collect();
        rows.sort_by_key(|r| r.0);
        rows
    }

    /// `ε(κ)` at fixed `n`, `K = ⌊T/n⌋`.
    pub fn curve_over_kappa(&self, bits: u32) -> Vec<(T, Option<T>)> {
        let k = self.params.budget / bits;
        self.grid.iter().filter(|g| g.bits == bits && g.iterations == k).map(|g| (g.kappa, g.epsilon)).collect()
    }

    /// Write the grid as CSV: `kappa,bits,iterations,c_alpha,c_beta,epsilon,feasible`.
    pub fn write_grid_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_writer(File::create(path)?);
        w.write_record(["kappa", "bits", "iterations", "c_alpha", "c_beta", "epsilon", "feasible"])?;
        let opt = |v: Option<T>| v.map(|x| format!("{:e}", x.as_f64())).unwrap_or_default();
        for g in &self.grid {
            w.write_record([
                format!("{}", g.kappa.as_f64()),
                g.bits.to_string(),
                g.iterations.to_string(),
                opt(g.c_alpha),
                opt(g.c_beta),
                opt(g.epsilon),
                g.feasible.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Structured text report: inputs, chosen design, both bit totals, full grid.
    pub fn report(&self) -> String {
        let p = &self.params;
        let b = &self.best;
        let mut s = String::new();
        let _ = writeln!(s, "[params]");
        let _ = writeln!(s, "agents = {}", p.agents);
        let _ = writeln!(s, "degree = {}", p.degree);
        let _ = writeln!(s, "max_local_dim = {}", p.max_local_dim);
        let _ = writeln!(s, "lipschitz = {}", p.lipschitz);
        let _ = writeln!(s, "lipschitz_max = {}", p.lipschitz_max);
        let _ = writeln!(s, "strong_convexity = {}", p.strong_convexity);
        let _ = writeln!(s, "gamma = {}", p.gamma());
        let _ = writeln!(s, "rho = {}", p.rho);
        let _ = writeln!(s, "step_size = {}", p.step_size);
        let _ = writeln!(s, "budget = {}", p.budget);
        let _ = writeln!(s, "resolution = {}", self.options.resolution);
        let _ = writeln!(s, "reading = \"{:?}\"", self.options.reading);
        let _ = writeln!(s);
        let _ = writeln!(s, "[design]");
        let _ = writeln!(s, "kappa = {}", b.kappa);
        let _ = writeln!(s, "bits = {}", b.bits);
        let _ = writeln!(s, "iterations = {}", b.iterations);
        let _ = writeln!(s, "c_alpha = {}", b.c_alpha);
        let _ = writeln!(s, "c_beta = {}", b.c_beta);
        let _ = writeln!(s, "epsilon = {}", b.epsilon);
        let _ = writeln!(s, "bits_n_times_k = {}", b.bits_per_iterations());
        let _ = writeln!(s, "bits_n_times_k_plus_1 = {}", b.bits_per_rounds());
        let _ = writeln!(s);
        let _ = writeln!(s, "[grid]");
        let _ = writeln!(s, "rows = {}", self.grid.len());
        let _ = writeln!(s, "feasible_rows = {}", self.grid.iter().filter(|g| g.feasible).count());
        let _ = writeln!(s, "kappa_values = {}", self.kappas.len());
        s
    }
}

/// Index of the unique minimum of a curve if it is strict and not at either end
/// of the feasible range.
pub fn unique_interior_minimum<T: Scalar>(values: &[Option<T>]) -> Option<usize> {
    let feasible: Vec<(usize, T)> = values.iter().enumerate().filter_map(|(i, v)| v.map(|x| (i, x))).collect();
    if feasible.len() < 3 {
        return None;
    }
    let (pos, &(idx, min)) = feasible
        .iter()
        .enumerate()
        .min_by(|a, b| a.1 .1.partial_cmp(&b.1 .1).unwrap())?;
    let ties = feasible.iter().filter(|(_, v)| *v <= min * (T::one() + T::lit(1e-12))).count();
    if ties != 1 || pos == 0 || pos == feasible.len() - 1 {
        return None;
    }
    Some(idx)
}
