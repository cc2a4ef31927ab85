//! Eight-thruster AUV model: nonlinear 12-state dynamics, thrust allocation,
//! discrete-time linearization and an RK4 plant integrator.
//!
//! The state is `x = [η, ν]` with `η = [p_X, p_Y, p_Z, q_X, q_Y, q_Z]` in the
//! global frame and `ν = [v_x, v_y, v_z, ω_x, ω_y, ω_z]` in the body frame.

use nalgebra::{DMatrix, Matrix3, Matrix6, SMatrix, SVector, Vector6};

use crate::error::{Error, Result};
use crate::linalg;

pub type StateVector = SVector<f64, 12>;
pub type InputVector = SVector<f64, 8>;
pub type ThrustMatrix = SMatrix<f64, 6, 8>;

pub const STATE_DIM: usize = 12;
pub const INPUT_DIM: usize = 8;

/// Pitch values closer than this to `±π/2` are rejected.
pub const SINGULARITY_MARGIN: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuvParams {
    /// Rigid-body mass `m` (kg); also used for the rotational diagonal.
    pub mass: f64,
    /// `X_v̇x, Y_v̇y, Z_v̇z, K_ω̇x, M_ω̇y, N_ω̇z` (kg, kg·m²).
    pub added_mass: [f64; 6],
    /// Quadratic drag `X_{v|v|} … N_{ω|ω|}`.
    pub drag: [f64; 6],
    /// Weight `W` (N).
    pub weight: f64,
    /// Buoyancy `B` (N).
    pub buoyancy: f64,
    /// Horizontal thruster tilt `θ` (rad).
    pub tilt: f64,
    /// Horizontal thrusters to the centre of gravity (m).
    pub l1: f64,
    /// Vertical thrusters to the body X axis (m).
    pub l2: f64,
    /// Vertical thrusters to the body Y axis (m).
    pub l3: f64,
    /// Sampling time `Δt` (s).
    pub dt: f64,
    /// RK4 substeps per plant step.
    pub substeps: usize,
}

impl Default for AuvParams {
    fn default() -> Self {
        Self {
            mass: 11.0,
            added_mass: [-2.8, -3.0, -3.2, -0.05, -1.0, -0.3],
            drag: [10.0, 10.0, 10.0, 4.0, 4.0, 4.0],
            weight: 107.8,
            buoyancy: 107.8,
            tilt: std::f64::consts::FRAC_PI_3,
            l1: 0.18,
            l2: 0.12,
            l3: 0.22,
            dt: 0.1,
            substeps: 1,
        }
    }
}

impl AuvParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.mass > 0.0) {
            return Err(Error::InvalidParameter("mass must be positive".into()));
        }
        if self.added_mass.iter().any(|&a| !(self.mass - a > 0.0)) {
            return Err(Error::InvalidParameter("total mass matrix must be positive definite".into()));
        }
        if self.drag.iter().any(|&d| !(d >= 0.0)) {
            return Err(Error::InvalidParameter("drag coefficients must be non-negative".into()));
        }
        if !(self.dt > 0.0) || self.substeps == 0 {
            return Err(Error::InvalidParameter("Δt must be positive and substeps at least one".into()));
        }
        let all = [self.weight, self.buoyancy, self.tilt, self.l1, self.l2, self.l3];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        Ok(())
    }

    /// `M = M_r + M_a` with `M_a = −diag(added_mass)`.
    pub fn mass_matrix(&self) -> Matrix6<f64> {
        Matrix6::from_diagonal(&Vector6::from_fn(|k, _| self.mass - self.added_mass[k]))
    }

    /// The 6×8 allocation matrix `τ`.
    pub fn thrust_matrix(&self) -> ThrustMatrix {
        let (s, c) = self.tilt.sin_cos();
        let (l1, l2, l3) = (self.l1, self.l2, self.l3);
        #[rustfmt::skip]
        let t = ThrustMatrix::from_row_slice(&[
            s, s, s, s, 0.0, 0.0, 0.0, 0.0,
            -c, c, c, -c, 0.0, 0.0, 0.0, 0.0,
            0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0,
            0.0, 0.0, 0.0, 0.0, l3, -l3, l3, -l3,
            0.0, 0.0, 0.0, 0.0, l2, l2, -l2, -l2,
            l1, -l1, l1, -l1, 0.0, 0.0, 0.0, 0.0,
        ]);
        t
    }
}

/// `τ_c(u) = τ u`.
pub fn thrust_allocation(params: &AuvParams, u: &InputVector) -> Vector6<f64> {
    params.thrust_matrix() * u
}

/// Coriolis matrix with `M_x … M_ωz` the diagonal of the total mass matrix.
pub fn coriolis(params: &AuvParams, nu: &Vector6<f64>) -> Matrix6<f64> {
    let m = params.mass_matrix();
    let (mx, my, mz, mwx, mwy, mwz) = (m[(0, 0)], m[(1, 1)], m[(2, 2)], m[(3, 3)], m[(4, 4)], m[(5, 5)]);
    let (vx, vy, vz, wx, wy, wz) = (nu[0], nu[1], nu[2], nu[3], nu[4], nu[5]);
    #[rustfmt::skip]
    let c = Matrix6::from_row_slice(&[
        0.0, 0.0, 0.0, 0.0, mz * vz, -my * vy,
        0.0, 0.0, 0.0, -mz * vz, 0.0, mx * vx,
        0.0, 0.0, 0.0, my * vy, -mx * vx, 0.0,
        0.0, mz * vz, -my * vy, 0.0, mwx * wz, -mwy * wy,
        -mz * vz, 0.0, mx * vx, -mwx * wz, 0.0, mwz * wx,
        my * vy, -mx * vx, 0.0, mwy * wy, -mwz * wx, 0.0,
    ]);
    c
}

/// `D(ν) = diag(d_k |ν_k|)`.
pub fn damping(params: &AuvParams, nu: &Vector6<f64>) -> Matrix6<f64> {
    Matrix6::from_diagonal(&Vector6::from_fn(|k, _| params.drag[k] * nu[k].abs()))
}

/// Restoring force `g(η)`; only `q_y` and `q_z` enter.
pub fn restoring(params: &AuvParams, eta: &Vector6<f64>) -> Vector6<f64> {
    let wb = params.weight - params.buoyancy;
    let (qy, qz) = (eta[4], eta[5]);
    Vector6::new(wb * qy, -wb * qy.cos() * qz.sin(), -wb * qy.cos() * qz.cos(), 0.0, 0.0, 0.0)
}

/// ZYX Euler rotation from body to global frame.
pub fn rotation(eta: &Vector6<f64>) -> Matrix3<f64> {
    let (sphi, cphi) = eta[3].sin_cos();
    let (sth, cth) = eta[4].sin_cos();
    let (spsi, cpsi) = eta[5].sin_cos();
    Matrix3::new(
        cpsi * cth,
        -spsi * cphi + cpsi * sth * sphi,
        spsi * sphi + cpsi * cphi * sth,
        spsi * cth,
        cpsi * cphi + sphi * sth * spsi,
        -cpsi * sphi + sth * spsi * cphi,
        -sth,
        cth * sphi,
        cth * cphi,
    )
}

/// Euler-rate matrix mapping body rates to `(q̇_X, q̇_Y, q̇_Z)`.
pub fn euler_rates(eta: &Vector6<f64>) -> Result<Matrix3<f64>> {
    let theta = eta[4];
    if !theta.is_finite() || theta.abs() >= std::f64::consts::FRAC_PI_2 - SINGULARITY_MARGIN {
        return Err(Error::KinematicSingularity { pitch: theta });
    }
    let (sphi, cphi) = eta[3].sin_cos();
    let (cth, tth) = (theta.cos(), theta.tan());
    Ok(Matrix3::new(1.0, sphi * tth, cphi * tth, 0.0, cphi, -sphi, 0.0, sphi / cth, cphi / cth))
}

/// `J(η) = diag(R, W)`.
pub fn kinematics(eta: &Vector6<f64>) -> Result<Matrix6<f64>> {
    let mut j = Matrix6::zeros();
    j.fixed_view_mut::<3, 3>(0, 0).copy_from(&rotation(eta));
    j.fixed_view_mut::<3, 3>(3, 3).copy_from(&euler_rates(eta)?);
    Ok(j)
}

fn split(x: &StateVector) -> (Vector6<f64>, Vector6<f64>) {
    (x.fixed_rows::<6>(0).into_owned(), x.fixed_rows::<6>(6).into_owned())
}

/// Continuous-time right-hand side `ẋ = f(x, u)`.
pub fn dynamics(params: &AuvParams, x: &StateVector, u: &InputVector) -> Result<StateVector> {
    let (eta, nu) = split(x);
    let eta_dot = kinematics(&eta)? * nu;
    let force = thrust_allocation(params, u) - coriolis(params, &nu) * nu - damping(params, &nu) * nu - restoring(params, &eta);
    let nu_dot = Vector6::from_fn(|k, _| force[k] / (params.mass - params.added_mass[k]));
    let mut out = StateVector::zeros();
    out.fixed_rows_mut::<6>(0).copy_from(&eta_dot);
    out.fixed_rows_mut::<6>(6).copy_from(&nu_dot);
    Ok(out)
}

/// Advance by `dt` with `params.substeps` RK4 steps and zero-order-hold input.
pub fn integrate(params: &AuvParams, x: &StateVector, u: &InputVector, dt: f64) -> Result<StateVector> {
    let h = dt / params.substeps as f64;
    let mut s = *x;
    for _ in 0..params.substeps {
        let k1 = dynamics(params, &s, u)?;
        let k2 = dynamics(params, &(s + 0.5 * h * k1), u)?;
        let k3 = dynamics(params, &(s + 0.5 * h * k2), u)?;
        let k4 = dynamics(params, &(s + h * k3), u)?;
        s += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if s.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState);
        }
    }
    Ok(s)
}

/// Discrete linear model `x(t+1) = A x(t) + B u(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub dt: f64,
}

impl LinearModel {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, dt: f64) -> Result<Self> {
        if a.nrows() != a.ncols() || b.nrows() != a.nrows() {
            return Err(Error::DimensionMismatch("A must be square with as many rows as B".into()));
        }
        Ok(Self { a, b, dt })
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn step(&self, x: &nalgebra::DVector<f64>, u: &nalgebra::DVector<f64>) -> nalgebra::DVector<f64> {
        &self.a * x + &self.b * u
    }

    /// `[B, AB, …, A^{n−1}B]`.
    pub fn controllability_matrix(&self) -> DMatrix<f64> {
        let n = self.state_dim();
        let m = self.input_dim();
        let mut out = DMatrix::zeros(n, n * m);
        let mut block = self.b.clone();
        for k in 0..n {
            out.view_mut((0, k * m), (n, m)).copy_from(&block);
            block = &self.a * block;
        }
        out
    }

    pub fn controllability_rank(&self) -> usize {
        linalg::rank(&self.controllability_matrix(), 1e-10)
    }
}

/// `A = [I, ΔtI; 0, I]`, `B = [0; Δt M⁻¹τ]`, checked for controllability.
pub fn linearize_discretize(params: &AuvParams) -> Result<LinearModel> {
    params.validate()?;
    let dt = params.dt;
    let mut a = DMatrix::identity(STATE_DIM, STATE_DIM);
    a.view_mut((0, 6), (6, 6)).fill_diagonal(dt);
    let minv_tau = params.mass_matrix().try_inverse().expect("positive diagonal") * params.thrust_matrix();
    let mut b = DMatrix::zeros(STATE_DIM, INPUT_DIM);
    b.view_mut((6, 0), (6, 8)).copy_from(&(dt * minv_tau));
    let model = LinearModel { a, b, dt };
    let rank = model.controllability_rank();
    if rank < STATE_DIM {
        return Err(Error::NotControllable { rank });
    }
    Ok(model)
}

/// Kinetic energy `½ ν'Mν`.
pub fn kinetic_energy(params: &AuvParams, x: &StateVector) -> f64 {
    let nu = x.fixed_rows::<6>(6);
    0.5 * (nu.transpose() * params.mass_matrix() * nu)[(0, 0)]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hover_is_equilibrium() {
        let p = AuvParams::default();
        let x = StateVector::zeros();
        assert_eq!(dynamics(&p, &x, &InputVector::zeros()).unwrap(), StateVector::zeros());
        assert_eq!(integrate(&p, &x, &InputVector::zeros(), 0.1).unwrap(), x);
    }

    #[test]
    fn single_thruster_column() {
        let p = AuvParams::default();
        let t = thrust_allocation(&p, &InputVector::from_fn(|k, _| if k == 0 { 1.0 } else { 0.0 }));
        let th = std::f64::consts::FRAC_PI_3;
        let expect = Vector6::new(th.sin(), -th.cos(), 0.0, 0.0, 0.0, p.l1);
        assert!((t - expect).norm() < 1e-15);
        let mut u = InputVector::zeros();
        u.fixed_rows_mut::<4>(4).fill(1.5);
        let t = thrust_allocation(&p, &u);
        assert!((t - Vector6::new(0.0, 0.0, 6.0, 0.0, 0.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn linear_model_structure() {
        let m = linearize_discretize(&AuvParams::default()).unwrap();
        assert_eq!(m.a[(0, 6)], 0.1);
        assert!(m.b.rows(0, 6).iter().all(|&v| v == 0.0));
        assert_eq!(m.controllability_rank(), 12);
    }

    #[test]
    fn singularity_guarded() {
        let p = AuvParams::default();
        let mut x = StateVector::zeros();
        x[4] = std::f64::consts::FRAC_PI_2;
        assert!(matches!(dynamics(&p, &x, &InputVector::zeros()), Err(Error::KinematicSingularity { .. })));
    }
}
