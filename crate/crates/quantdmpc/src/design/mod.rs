//! Offline quantization design.
//!
//! For a fixed shrinkage `κ`, bit count `n` and iteration count `K` the
//! certified sub-optimality `ε` and the initial intervals `C_α`, `C_β` satisfy
//! three inequalities that are linear in `(ε, C_α, C_β)`:
//!
//! * the iteration requirement `ε(1−κ) ≥ κ^{K+1}(ρ + δ + (1−κ)(ε+δ))`, with
//!   `δ = κ(C₁ + √(2L)C₂) / (L(κ+γ−1)(1−γ))` linear in the intervals;
//! * the two interval conditions
//!   `a₁(ε+ρ) + a₂C_α/2^{n+1} + a₃C_β/2^{n+1} ≤ C_α/2` and
//!   `b₁(ε+ρ) + b₂C_α/2^{n+1} + b₃C_β/2^{n+1} ≤ C_β/2`.
//!
//! [`solve_subproblem`] minimizes `ε` over that polyhedron by enumerating its
//! vertices, and [`search::optimize_design`] scans the `(κ, n, K)` grid.
//!
//! The coefficient expressions are printed as two adjacent parenthesized groups.
//! [`CoefficientReading::Ratio`] (the default) divides the first group by the
//! second; [`CoefficientReading::Product`] multiplies them.

pub mod offline;
pub mod search;

pub use offline::{estimate_rho, initial_solution, InitialSolution, RhoEstimate, SolutionPathSampler};
pub use search::{kappa_grid, optimize_design, unique_interior_minimum, DesignOptions, DesignSearch, GridPoint, KappaGrid};

use crate::error::{Error, Result};
use crate::netqp::DistributedProblem;
use crate::scalar::Scalar;

/// Scalars entering the sub-optimality bound.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundParams<T> {
    /// `M`.
    pub agents: usize,
    /// `d`.
    pub degree: usize,
    /// `m_max`.
    pub max_local_dim: usize,
    /// `L`.
    pub lipschitz: T,
    /// `L_max`.
    pub lipschitz_max: T,
    /// `σ_f`.
    pub strong_convexity: T,
    /// `ρ`.
    pub rho: T,
    /// `τ`.
    pub step_size: T,
    /// `T`, bits per scalar channel per time step.
    pub budget: u32,
}

impl<T: Scalar> BoundParams<T> {
    /// `γ = σ_f / L`.
    pub fn gamma(&self) -> T {
        self.strong_convexity / self.lipschitz
    }

    pub fn validate(&self) -> Result<()> {
        let g = self.gamma();
        if self.agents == 0 || self.degree == 0 || self.max_local_dim == 0 || self.budget == 0 {
            return Err(Error::InvalidParameter("M, d, m_max and T must be positive".into()));
        }
        if !(self.lipschitz > T::zero() && self.lipschitz_max > T::zero() && self.strong_convexity > T::zero()) {
            return Err(Error::InvalidParameter("L, L_max and σ_f must be positive".into()));
        }
        if !(g > T::zero() && g < T::one()) {
            return Err(Error::DomainError(format!("γ = {g} must lie in (0, 1)")));
        }
        if !(self.rho >= T::zero()) || !self.rho.is_finite() {
            return Err(Error::InvalidParameter("ρ must be finite and non-negative".into()));
        }
        if !(self.step_size > T::zero() && self.step_size * self.lipschitz < T::one()) {
            return Err(Error::InvalidParameter(format!("step size {} must lie in (0, 1/L)", self.step_size)));
        }
        Ok(())
    }
}

impl BoundParams<f64> {
    /// Read `M, d, m_max, L, L_max, σ_f` from a built problem. The degree is
    /// raised to one for the single-agent graph.
    pub fn from_problem(problem: &DistributedProblem, rho: f64, step_size: f64, budget: u32) -> Self {
        let md = problem.convexity_metadata();
        Self {
            agents: problem.agent_count(),
            degree: problem.graph().degree().max(1),
            max_local_dim: problem.max_local_dim(),
            lipschitz: md.lipschitz,
            lipschitz_max: md.lipschitz_max,
            strong_convexity: md.strong_convexity,
            rho,
            step_size,
            budget,
        }
    }
}

/// How to read the printed coefficient expressions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoefficientReading {
    #[default]
    Ratio,
    Product,
}

/// Interval-condition coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coefficients<T> {
    pub a1: T,
    pub a2: T,
    pub a3: T,
    pub b1: T,
    pub b2: T,
    pub b3: T,
}

fn check_kappa<T: Scalar>(params: &BoundParams<T>, kappa: T) -> Result<T> {
    let g = params.gamma();
    if !(g < T::one()) {
        return Err(Error::DomainError(format!("γ = {g} must be below one")));
    }
    let e = (kappa + g - T::one()) * (T::one() - g);
    if !(e > T::zero()) || !(kappa < T::one()) {
        return Err(Error::DomainError(format!("κ = {kappa} must lie in (1 − γ, 1) = ({}, 1)", T::one() - g)));
    }
    Ok(e)
}

/// Evaluate `a₁, a₂, a₃, b₁, b₂, b₃` at `κ`.
pub fn coefficients<T: Scalar>(params: &BoundParams<T>, kappa: T, reading: CoefficientReading) -> Result<Coefficients<T>> {
    let e = check_kappa(params, kappa)?;
    let one = T::one();
    let m = T::count(params.agents);
    let d = T::count(params.degree);
    let mm = T::count(params.max_local_dim);
    let l = params.lipschitz;
    let lm = params.lipschitz_max;
    let sm = mm.sqrt();
    let sdm = (d * mm).sqrt();
    let k1 = kappa + one;
    let join = |num: T, den: T| match reading {
        CoefficientReading::Ratio => num / den,
        CoefficientReading::Product => num * den,
    };
    let a1 = join(k1, kappa);
    let a2 = join(m * sm * kappa * k1 * (d * lm + l.sqrt()) + m * sm * l * e, l * kappa * e);
    let a3 = join(m * sdm * k1, l * e);
    let b1 = join(lm * k1, kappa);
    let b2 = join(lm * m * sm * kappa * k1 * (d * lm + l.sqrt()) + lm * d * sm * l * k1 * e, l * kappa * e);
    let b3 = join(lm * m * sdm * kappa * k1 + l * sdm * e, l * kappa * e);
    Ok(Coefficients { a1, a2, a3, b1, b2, b3 })
}

/// `(∂δ/∂C_α, ∂δ/∂C_β)`, so that `δ = dα·C_α + dβ·C_β`.
pub fn delta_gradient<T: Scalar>(params: &BoundParams<T>, kappa: T, bits: u32) -> Result<(T, T)> {
    let e = check_kappa(params, kappa)?;
    let m = T::count(params.agents);
    let d = T::count(params.degree);
    let sm = T::count(params.max_local_dim).sqrt();
    let l = params.lipschitz;
    let q = crate::quant::pow2::<T>(bits + 1);
    // C₁ = M√m (L_max d C_α + √d C_β)/2^{n+1},  C₂ = (√2/2) M√m C_α / 2^{n+1}
    let c1a = m * sm * params.lipschitz_max * d / q;
    let c1b = m * sm * d.sqrt() / q;
    let c2a = T::lit(std::f64::consts::FRAC_1_SQRT_2) * m * sm / q;
    let scale = kappa / (l * e);
    let s2l = (T::lit(2.0) * l).sqrt();
    Ok((scale * (c1a + s2l * c2a), scale * c1b))
}

/// `δ` for given intervals.
pub fn delta<T: Scalar>(params: &BoundParams<T>, kappa: T, bits: u32, c_alpha: T, c_beta: T) -> Result<T> {
    let (da, db) = delta_gradient(params, kappa, bits)?;
    Ok(da * c_alpha + db * c_beta)
}

/// Whether `K` iterations meet the requirement, in the overflow-free form
/// `ε(1−κ) ≥ κ^{K+1}(ρ + δ + (1−κ)(ε+δ))`.
pub fn iterations_sufficient<T: Scalar>(epsilon: T, rho: T, delta: T, kappa: T, iterations: u32) -> bool {
    let one = T::one();
    let lhs = epsilon * (one - kappa);
    let rhs = kappa.powi(iterations as i32 + 1) * (rho + delta + (one - kappa) * (epsilon + delta));
    lhs >= rhs
}

/// Smallest `K ≥ 0` with `K ≥ ⌈log_κ(ε(1−κ)/(ρ+δ+(1−κ)(ε+δ)))⌉ − 1`.
pub fn min_iterations<T: Scalar>(epsilon: T, rho: T, delta: T, kappa: T) -> Result<u32> {
    let one = T::one();
    if !(epsilon > T::zero()) {
        return Err(Error::DomainError("ε must be positive".into()));
    }
    if !(kappa > T::zero() && kappa < one) {
        return Err(Error::DomainError("κ must lie in (0, 1)".into()));
    }
    if rho < T::zero() || delta < T::zero() {
        return Err(Error::DomainError("ρ and δ must be non-negative".into()));
    }
    let arg = epsilon * (one - kappa) / (rho + delta + (one - kappa) * (epsilon + delta));
    if !(arg > T::zero()) {
        return Err(Error::Infeasible("logarithm argument is not positive".into()));
    }
    if arg >= one {
        return Ok(0);
    }
    let est = (arg.ln() / kappa.ln()).ceil() - one;
    let mut k = est.max(T::zero()).to_u32().unwrap_or(u32::MAX - 1);
    while k > 0 && iterations_sufficient(epsilon, rho, delta, kappa, k - 1) {
        k -= 1;
    }
    while !iterations_sufficient(epsilon, rho, delta, kappa, k) {
        k = k
            .checked_add(1)
            .ok_or_else(|| Error::Infeasible("iteration count overflows".into()))?;
    }
    Ok(k)
}

/// Optimal intervals and bound for one `(κ, n, K)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Subproblem<T> {
    pub epsilon: T,
    pub c_alpha: T,
    pub c_beta: T,
}

/// Linear constraints `rows · (ε, C_α, C_β) ≤ rhs` of one subproblem.
pub fn subproblem_constraints<T: Scalar>(
    params: &BoundParams<T>,
    kappa: T,
    bits: u32,
    iterations: u32,
    reading: CoefficientReading,
) -> Result<[([T; 3], T); 3]> {
    let one = T::one();
    let half = T::lit(0.5);
    let c = coefficients(params, kappa, reading)?;
    let (da, db) = delta_gradient(params, kappa, bits)?;
    let q = crate::quant::pow2::<T>(bits + 1);
    let kk = kappa.powi(iterations as i32 + 1);
    let two_minus = T::lit(2.0) - kappa;
    Ok([
        ([kk * (one - kappa) - (one - kappa), kk * two_minus * da, kk * two_minus * db], -kk * params.rho),
        ([c.a1, c.a2 / q - half, c.a3 / q], -c.a1 * params.rho),
        ([c.b1, c.b2 / q, c.b3 / q - half], -c.b1 * params.rho),
    ])
}

fn det3<T: Scalar>(m: &[[T; 3]; 3]) -> T {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

fn solve3<T: Scalar>(m: &[[T; 3]; 3], b: &[T; 3]) -> Option<[T; 3]> {
    let d = det3(m);
    // Relative to the Hadamard bound, so badly scaled rows are not mistaken for singular ones.
    let scale = m.iter().fold(T::one(), |a, r| a * r.iter().fold(T::zero(), |b, &v| b.max(v.abs())));
    if d.abs() <= T::epsilon() * scale * T::lit(16.0) {
        return None;
    }
    let mut out = [T::zero(); 3];
    for (c, slot) in out.iter_mut().enumerate() {
        let mut mc = *m;
        for r in 0..3 {
            mc[r][c] = b[r];
        }
        *slot = det3(&mc) / d;
    }
    Some(out)
}

/// Minimize `ε` for fixed `(κ, n, K)` by enumerating the vertices of the
/// feasible polyhedron in `(ε, C_α, C_β) ≥ 0`.
pub fn solve_subproblem<T: Scalar>(
    params: &BoundParams<T>,
    kappa: T,
    bits: u32,
    iterations: u32,
    reading: CoefficientReading,
) -> Result<Subproblem<T>> {
    let main = subproblem_constraints(params, kappa, bits, iterations, reading)?;
    let mut rows: Vec<([T; 3], T)> = main.to_vec();
    for k in 0..3 {
        let mut r = [T::zero(); 3];
        r[k] = -T::one();
        rows.push((r, T::zero()));
    }
    let tol = T::lit(1e-10).max(T::epsilon() * T::lit(64.0));
    let feasible = |x: &[T; 3]| {
        rows.iter().all(|(a, b)| {
            let lhs = a[0] * x[0] + a[1] * x[1] + a[2] * x[2];
            let scale = (a[0] * x[0]).abs() + (a[1] * x[1]).abs() + (a[2] * x[2]).abs() + b.abs();
            lhs - *b <= tol * scale.max(T::min_positive_value())
        })
    };
    let mut best: Option<[T; 3]> = None;
    let n = rows.len();
    for i in 0..n {
        for j in (i + 1)..n {
            for k in (j + 1)..n {
                let m = [rows[i].0, rows[j].0, rows[k].0];
                let b = [rows[i].1, rows[j].1, rows[k].1];
                let Some(x) = solve3(&m, &b) else { continue };
                if !x.iter().all(|v| v.is_finite()) || !feasible(&x) {
                    continue;
                }
                let x = [x[0].max(T::zero()), x[1].max(T::zero()), x[2].max(T::zero())];
                let better = match &best {
                    None => true,
                    Some(cur) => x[0] < cur[0] || (x[0] == cur[0] && x[1] + x[2] < cur[1] + cur[2]),
                };
                if better {
                    best = Some(x);
                }
            }
        }
    }
    best.map(|x| Subproblem { epsilon: x[0], c_alpha: x[1], c_beta: x[2] })
        .ok_or_else(|| Error::Infeasible(format!("no feasible intervals for κ = {kappa}, n = {bits}, K = {iterations}")))
}

/// Slack of the two interval conditions (non-negative when satisfied).
pub fn interval_slack<T: Scalar>(
    params: &BoundParams<T>,
    kappa: T,
    bits: u32,
    design: &Subproblem<T>,
    reading: CoefficientReading,
) -> Result<(T, T)> {
    let c = coefficients(params, kappa, reading)?;
    let q = crate::quant::pow2::<T>(bits + 1);
    let half = T::lit(0.5);
    let s = design.epsilon + params.rho;
    let sa = half * design.c_alpha - (c.a1 * s + c.a2 * design.c_alpha / q + c.a3 * design.c_beta / q);
    let sb = half * design.c_beta - (c.b1 * s + c.b2 * design.c_alpha / q + c.b3 * design.c_beta / q);
    Ok((sa, sb))
}

/// A complete quantization design with its certified bound.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuantizationDesign<T> {
    pub kappa: T,
    pub bits: u32,
    pub iterations: u32,
    pub c_alpha: T,
    pub c_beta: T,
    pub epsilon: T,
    pub feasible: bool,
}

impl<T: Scalar> QuantizationDesign<T> {
    /// A design supplied by hand; its bound is left undetermined.
    pub fn manual(kappa: T, bits: u32, iterations: u32, c_alpha: T, c_beta: T) -> Self {
        Self { kappa, bits, iterations, c_alpha, c_beta, epsilon: T::nan(), feasible: false }
    }

    /// Bits per scalar channel counting `K` rounds.
    pub fn bits_per_iterations(&self) -> u64 {
        self.bits as u64 * self.iterations as u64
    }

    /// Bits per scalar channel counting all `K + 1` transmitted rounds.
    pub fn bits_per_rounds(&self) -> u64 {
        self.bits as u64 * (self.iterations as u64 + 1)
    }
}

impl QuantizationDesign<f64> {
    pub fn quantizer_settings(&self) -> crate::solver::QuantizerSettings {
        crate::solver::QuantizerSettings {
            bits: self.bits,
            kappa: self.kappa,
            c_alpha: self.c_alpha,
            c_beta: self.c_beta,
        }
    }
}
