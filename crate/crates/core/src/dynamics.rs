//! Plant models: the externally actuated rigid body and the rigid body carrying
//! three principal-axis rotors, plus the momentum map, mechanical connection and
//! locked inertia tensor of the latter.

use nalgebra::{linalg::LU, Const, Matrix3, Matrix6, Vector3, Vector6};

use crate::error::{Error, Result};
use crate::liealg::{adstar, hat, InertiaMetric, RotationMatrix};

/// Rigid-body inertia `I` and rotor inertias `K = diag(k₁, k₂, k₃)`.
///
/// The 6×6 block matrix `[[I+K, K], [K, K]]` of the coupled equations is
/// factored once at construction.
#[derive(Debug, Clone)]
pub struct InertiaParams {
    body: InertiaMetric,
    rotor: Vector3<f64>,
    locked: InertiaMetric,
    block: LU<f64, Const<6>, Const<6>>,
}

impl InertiaParams {
    pub fn new(body: Matrix3<f64>, rotor: Vector3<f64>) -> Result<Self> {
        let body = InertiaMetric::new(body).map_err(|_| {
            Error::InvalidInertia("rigid-body inertia must be symmetric positive definite".into())
        })?;
        if !rotor.iter().all(|k| k.is_finite() && *k > 0.0) {
            return Err(Error::InvalidInertia(
                "rotor inertias must be finite and positive".into(),
            ));
        }
        let k = Matrix3::from_diagonal(&rotor);
        let locked = InertiaMetric::new(body.matrix() + k)
            .map_err(|_| Error::InvalidInertia("locked inertia I+K is singular".into()))?;

        let mut m = Matrix6::zeros();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(locked.matrix());
        m.fixed_view_mut::<3, 3>(0, 3).copy_from(&k);
        m.fixed_view_mut::<3, 3>(3, 0).copy_from(&k);
        m.fixed_view_mut::<3, 3>(3, 3).copy_from(&k);
        let block = m.lu();
        if !block.is_invertible() {
            return Err(Error::InvalidInertia(
                "block inertia matrix is singular".into(),
            ));
        }
        Ok(Self {
            body,
            rotor,
            locked,
            block,
        })
    }

    /// Rigid-body inertia `I` as a metric.
    pub fn body(&self) -> &InertiaMetric {
        &self.body
    }

    /// Diagonal of `K`.
    pub fn rotor(&self) -> &Vector3<f64> {
        &self.rotor
    }

    pub fn rotor_matrix(&self) -> Matrix3<f64> {
        Matrix3::from_diagonal(&self.rotor)
    }

    /// Locked inertia `I + K` in the body frame.
    pub fn locked(&self) -> &InertiaMetric {
        &self.locked
    }

    /// Same parameters with `K` scaled by `factor`.
    pub fn with_scaled_rotors(&self, factor: f64) -> Result<Self> {
        Self::new(*self.body.matrix(), self.rotor * factor)
    }
}

/// Full plant state `(R, Θ, Ω, Ω_r)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BodyState {
    pub attitude: RotationMatrix,
    /// Rotor angles; carried unwrapped during integration.
    pub rotor_angles: Vector3<f64>,
    /// Body angular velocity Ω.
    pub omega: Vector3<f64>,
    /// Rotor velocities relative to the body, Ω_r.
    pub rotor_rates: Vector3<f64>,
}

impl BodyState {
    pub fn at_rest(attitude: RotationMatrix) -> Self {
        Self {
            attitude,
            rotor_angles: Vector3::zeros(),
            omega: Vector3::zeros(),
            rotor_rates: Vector3::zeros(),
        }
    }

    /// Rotor angles wrapped to `[0, 2π)`.
    pub fn wrapped_rotor_angles(&self) -> Vector3<f64> {
        self.rotor_angles
            .map(|a| a.rem_euclid(std::f64::consts::TAU))
    }
}

/// Angular momentum in the body frame (Π) and inertial frame (μ = RΠ).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Momentum {
    pub body: Vector3<f64>,
    pub spatial: Vector3<f64>,
}

/// Time derivative of a [`BodyState`].
///
/// `attitude_rate` is `Ṙ = R hat(Ω)`; `body_velocity` is the same tangent
/// vector left-trivialized, which is what the Lie-group integrator consumes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateDerivative {
    pub attitude_rate: Matrix3<f64>,
    pub body_velocity: Vector3<f64>,
    pub rotor_angle_rate: Vector3<f64>,
    pub omega_dot: Vector3<f64>,
    pub rotor_rate_dot: Vector3<f64>,
}

/// Π = (I+K)Ω + KΩ_r.
pub fn momentum_body(
    p: &InertiaParams,
    omega: &Vector3<f64>,
    omega_r: &Vector3<f64>,
) -> Vector3<f64> {
    p.locked.flat(omega) + p.rotor.component_mul(omega_r)
}

/// μ = RΠ.
pub fn momentum_spatial(r: &RotationMatrix, pi: &Vector3<f64>) -> Vector3<f64> {
    r * pi
}

pub fn momentum(p: &InertiaParams, s: &BodyState) -> Momentum {
    let body = momentum_body(p, &s.omega, &s.rotor_rates);
    Momentum {
        body,
        spatial: momentum_spatial(&s.attitude, &body),
    }
}

/// A = (I+K)⁻¹KΩ_r + Ω.
pub fn mechanical_connection(
    p: &InertiaParams,
    omega: &Vector3<f64>,
    omega_r: &Vector3<f64>,
) -> Vector3<f64> {
    p.locked.sharp(&p.rotor.component_mul(omega_r)) + omega
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Frame {
    Body,
    Inertial,
}

/// Locked inertia tensor: `I + K` in the body frame, `R(I+K)Rᵀ` in the inertial frame.
pub fn locked_inertia(p: &InertiaParams, r: &RotationMatrix, frame: Frame) -> Matrix3<f64> {
    match frame {
        Frame::Body => *p.locked.matrix(),
        Frame::Inertial => r.matrix() * p.locked.matrix() * r.matrix().transpose(),
    }
}

/// Kinetic energy `½⟨Ω, IΩ⟩ + ½⟨Ω+Ω_r, K(Ω+Ω_r)⟩`.
pub fn kinetic_energy(p: &InertiaParams, omega: &Vector3<f64>, omega_r: &Vector3<f64>) -> f64 {
    let total = omega + omega_r;
    0.5 * p.body.inner(omega, omega) + 0.5 * total.dot(&p.rotor.component_mul(&total))
}

/// Vector field of the rigid body with three rotors under rotor torques `u_int`.
///
/// Solves `[[I+K, K], [K, K]] (Ω̇, Ω̇_r) = (Π × Ω, u_int)`.
pub fn deriv_internal(p: &InertiaParams, s: &BodyState, u_int: &Vector3<f64>) -> StateDerivative {
    let pi = momentum_body(p, &s.omega, &s.rotor_rates);
    let gyro = adstar(&s.omega, &pi);
    let rhs = Vector6::new(gyro.x, gyro.y, gyro.z, u_int.x, u_int.y, u_int.z);
    let acc = p
        .block
        .solve(&rhs)
        .expect("block matrix checked invertible at construction");
    StateDerivative {
        attitude_rate: s.attitude.matrix() * hat(&s.omega).matrix(),
        body_velocity: s.omega,
        rotor_angle_rate: s.rotor_rates,
        omega_dot: acc.fixed_rows::<3>(0).into_owned(),
        rotor_rate_dot: acc.fixed_rows::<3>(3).into_owned(),
    }
}

/// Closed-form elimination of the block system:
/// `Ω̇ = I⁻¹(Π × Ω − u)`, `Ω̇_r = (K⁻¹ + I⁻¹)u − I⁻¹(Π × Ω)`.
///
/// Kept as an independent route for cross-checking [`deriv_internal`].
pub fn deriv_internal_closed_form(
    p: &InertiaParams,
    s: &BodyState,
    u_int: &Vector3<f64>,
) -> (Vector3<f64>, Vector3<f64>) {
    let pi = momentum_body(p, &s.omega, &s.rotor_rates);
    let gyro = pi.cross(&s.omega);
    let omega_dot = p.body.sharp(&(gyro - u_int));
    let rotor_rate_dot = u_int.component_div(&p.rotor) + p.body.sharp(u_int) - p.body.sharp(&gyro);
    (omega_dot, rotor_rate_dot)
}

/// Externally actuated rigid body: `Ṙ = R hat(Ω)`, `Ω̇ = I⁻¹(IΩ × Ω) + u_ext`.
///
/// `u_ext` is an angular acceleration (the applied torque is `I u_ext`).
pub fn deriv_external(
    inertia: &InertiaMetric,
    r: &RotationMatrix,
    omega: &Vector3<f64>,
    u_ext: &Vector3<f64>,
) -> StateDerivative {
    let omega_dot = inertia.sharp(&adstar(omega, &inertia.flat(omega))) + u_ext;
    StateDerivative {
        attitude_rate: r.matrix() * hat(omega).matrix(),
        body_velocity: *omega,
        rotor_angle_rate: Vector3::zeros(),
        omega_dot,
        rotor_rate_dot: Vector3::zeros(),
    }
}
