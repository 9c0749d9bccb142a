//! Closed-loop tracking experiments.
//!
//! The reference is generated by a second rigid body with rotors driven by a
//! torque program. Plant, reference and the integral state are advanced as one
//! state on `SO(3)² × R²¹`, so the controller always sees the exact reference
//! and its acceleration.

use nalgebra::{Matrix3, SVector, Vector3};
use serde::Serialize;

use crate::control::{
    control_uint, ecl_rate_bound, ecl_value, error_state, gain_derive, gain_feasible,
    in_certified_region, nav_psi, AgatController, ErrorState, Feasibility, GainSet,
    NavigationWeights,
};
use crate::dynamics::{
    deriv_external, deriv_internal, momentum, momentum_body, momentum_spatial, BodyState,
    InertiaParams,
};
use crate::error::{Error, Result};
use crate::integrate::{integrate_observed, IntegratorConfig, LieState, LieTangent, Trajectory};
use crate::liealg::{geodesic_distance, RotationMatrix};

/// Rotor torque program driving the reference body.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ReferenceProgram {
    Zero,
    Constant(Vector3<f64>),
    /// `amplitude ∘ (sin t, cos t, sin t)`.
    Sinusoid(Vector3<f64>),
}

impl ReferenceProgram {
    pub fn torque(&self, t: f64) -> Vector3<f64> {
        match self {
            ReferenceProgram::Zero => Vector3::zeros(),
            ReferenceProgram::Constant(a) => *a,
            ReferenceProgram::Sinusoid(a) => {
                a.component_mul(&Vector3::new(t.sin(), t.cos(), t.sin()))
            }
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            ReferenceProgram::Zero => "zero",
            ReferenceProgram::Constant(_) => "constant",
            ReferenceProgram::Sinusoid(_) => "sinusoid",
        }
    }

    pub fn amplitude(&self) -> Vector3<f64> {
        match self {
            ReferenceProgram::Zero => Vector3::zeros(),
            ReferenceProgram::Constant(a) | ReferenceProgram::Sinusoid(a) => *a,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.amplitude().iter().all(|x| x.is_finite()) {
            Ok(())
        } else {
            Err(Error::InvalidGains(
                "reference amplitude must be finite".into(),
            ))
        }
    }
}

/// Initial rotor velocity of the reference body.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RotorInit {
    Explicit(Vector3<f64>),
    /// Chosen so the reference carries the plant's spatial momentum.
    FromMomentum,
}

#[derive(Debug, Clone)]
pub struct PlantSetup {
    pub params: InertiaParams,
    pub initial: BodyState,
}

#[derive(Debug, Clone)]
pub struct ReferenceSetup {
    pub params: InertiaParams,
    pub attitude: RotationMatrix,
    pub omega: Vector3<f64>,
    pub rotor_angles: Vector3<f64>,
    pub rotor_rates: RotorInit,
    pub program: ReferenceProgram,
}

/// How the plant is actuated in [`run_closed_loop`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Actuation {
    /// Rotor torques `u_int`, rigid body with rotors.
    #[default]
    Internal,
    /// Body acceleration `u_ext` applied to the bare rigid body.
    External,
}

#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub plant: PlantSetup,
    pub reference: ReferenceSetup,
    pub weights: NavigationWeights,
    pub gains: GainSet,
    pub integrator: IntegratorConfig,
    pub actuation: Actuation,
}

/// Hessian and gradient bounds used with the printed simulation gains.
pub const NOMINAL_MU_HESS: f64 = 2.0048;
pub const NOMINAL_LAMBDA_SUP: f64 = 1.42;

pub fn standard_plant() -> PlantSetup {
    let inertia = Matrix3::new(4.0, 1.0, 1.0, 1.0, 5.2, 2.0, 1.0, 2.0, 6.3);
    let params = InertiaParams::new(inertia, Vector3::new(5.0, 6.0, 7.0)).expect("valid plant");
    let attitude =
        RotationMatrix::from_row_slice(&[0.36, 0.48, -0.8, -0.8, 0.6, 0.0, 0.48, 0.64, 0.6])
            .expect("printed attitude is a rotation");
    let omega = params.body().sharp(&Vector3::new(1.0, 2.2, 5.1));
    PlantSetup {
        params,
        initial: BodyState {
            attitude,
            rotor_angles: Vector3::zeros(),
            omega,
            rotor_rates: Vector3::new(0.5, 1.9, 1.5),
        },
    }
}

pub fn standard_reference(program: ReferenceProgram) -> ReferenceSetup {
    let params = InertiaParams::new(
        Matrix3::from_diagonal(&Vector3::new(1.0, 1.2, 2.0)),
        Vector3::new(4.0, 3.0, 2.0),
    )
    .expect("valid reference");
    let omega = params.body().sharp(&Vector3::new(-0.8, -0.3, -0.5));
    ReferenceSetup {
        params,
        attitude: RotationMatrix::identity(),
        omega,
        rotor_angles: Vector3::zeros(),
        rotor_rates: RotorInit::FromMomentum,
        program,
    }
}

/// The three simulation programs with their printed amplitudes.
pub fn standard_programs() -> [ReferenceProgram; 3] {
    [
        ReferenceProgram::Zero,
        ReferenceProgram::Constant(Vector3::new(0.2, 0.1, 0.2)),
        ReferenceProgram::Sinusoid(Vector3::new(1.0, 1.0, 1.0)),
    ]
}

/// Printed parameters with the printed gains `(k_p, k_d, k_I) = (1, 3, 1)` and
/// κ in the middle of its admissible interval.
pub fn standard_scenario(program: ReferenceProgram) -> ScenarioConfig {
    let kappa = 1.5 / NOMINAL_MU_HESS;
    ScenarioConfig {
        plant: standard_plant(),
        reference: standard_reference(program),
        weights: NavigationWeights::identity(),
        gains: gain_derive(1.0, 3.0, 1.0, kappa, NOMINAL_MU_HESS, NOMINAL_LAMBDA_SUP)
            .expect("valid gains"),
        integrator: IntegratorConfig::default(),
        actuation: Actuation::Internal,
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        self.integrator.validate()?;
        self.reference.program.validate()?;
        self.reference_initial_state().map(|_| ())
    }

    pub fn reference_initial_state(&self) -> Result<BodyState> {
        let r = &self.reference;
        let rotor_rates = match r.rotor_rates {
            RotorInit::Explicit(v) => v,
            RotorInit::FromMomentum => {
                let mu = momentum(&self.plant.params, &self.plant.initial).spatial;
                consistent_rotor_velocity(&r.params, &r.attitude, &r.omega, &mu)?
            }
        };
        Ok(BodyState {
            attitude: r.attitude,
            rotor_angles: r.rotor_angles,
            omega: r.omega,
            rotor_rates,
        })
    }

    /// Same scenario with the plant's attitude and velocity set to the reference's.
    pub fn starting_on_reference(&self) -> Self {
        let mut cfg = self.clone();
        cfg.plant.initial.attitude = self.reference.attitude;
        cfg.plant.initial.omega = self.reference.omega;
        cfg
    }

    pub fn with_gains(&self, gains: GainSet) -> Self {
        Self {
            gains,
            ..self.clone()
        }
    }

    pub fn with_actuation(&self, actuation: Actuation) -> Self {
        Self {
            actuation,
            ..self.clone()
        }
    }

    pub fn controller(&self) -> AgatController {
        AgatController::new(*self.plant.params.body(), self.weights, self.gains)
    }
}

/// Reference rotor velocity giving spatial momentum `mu_spatial`:
/// `Ω_rd(0) = K_d⁻¹(R_d0ᵀ μ − (I_d + K_d)Ω_d0)`.
pub fn consistent_rotor_velocity(
    ref_params: &InertiaParams,
    r_d0: &RotationMatrix,
    omega_d0: &Vector3<f64>,
    mu_spatial: &Vector3<f64>,
) -> Result<Vector3<f64>> {
    let k = ref_params.rotor();
    if k.iter().any(|x| x.abs() < 1e-12) {
        return Err(Error::SingularRotorInertia);
    }
    let body = r_d0.matrix().transpose() * mu_spatial;
    Ok((body - ref_params.locked().flat(omega_d0)).component_div(k))
}

/// Reference trajectory with `Ω̇_d` evaluated from the vector field at every sample.
#[derive(Debug, Clone)]
pub struct ReferenceRun {
    pub trajectory: Trajectory<1, 9>,
    pub omega_dot: Vec<Vector3<f64>>,
}

fn pack_body(s: &BodyState) -> LieState<1, 9> {
    let mut v = SVector::<f64, 9>::zeros();
    v.fixed_rows_mut::<3>(0).copy_from(&s.rotor_angles);
    v.fixed_rows_mut::<3>(3).copy_from(&s.omega);
    v.fixed_rows_mut::<3>(6).copy_from(&s.rotor_rates);
    LieState {
        rotations: [s.attitude],
        vector: v,
    }
}

fn unpack_body(s: &LieState<1, 9>) -> BodyState {
    BodyState {
        attitude: s.rotations[0],
        rotor_angles: s.vector.fixed_rows::<3>(0).into_owned(),
        omega: s.vector.fixed_rows::<3>(3).into_owned(),
        rotor_rates: s.vector.fixed_rows::<3>(6).into_owned(),
    }
}

pub fn make_reference(cfg: &ScenarioConfig) -> Result<ReferenceRun> {
    cfg.integrator.validate()?;
    let params = cfg.reference.params.clone();
    let program = cfg.reference.program;
    let field = move |t: f64, s: &LieState<1, 9>| {
        let d = deriv_internal(&params, &unpack_body(s), &program.torque(t));
        let mut v = SVector::<f64, 9>::zeros();
        v.fixed_rows_mut::<3>(0).copy_from(&d.rotor_angle_rate);
        v.fixed_rows_mut::<3>(3).copy_from(&d.omega_dot);
        v.fixed_rows_mut::<3>(6).copy_from(&d.rotor_rate_dot);
        LieTangent {
            angular: [d.body_velocity],
            vector: v,
        }
    };
    let n = cfg.integrator.steps() + 1;
    let mut run = ReferenceRun {
        trajectory: Trajectory {
            times: Vec::with_capacity(n),
            states: Vec::with_capacity(n),
        },
        omega_dot: Vec::with_capacity(n),
    };
    integrate_observed(
        &field,
        pack_body(&cfg.reference_initial_state()?),
        &cfg.integrator,
        |_, t, s| {
            run.trajectory.times.push(t);
            run.trajectory.states.push(*s);
            run.omega_dot
                .push(field(t, s).vector.fixed_rows::<3>(3).into_owned());
        },
    )?;
    Ok(run)
}

/// Combined state `[R, R_d] × (Θ, Ω, Ω_r, Θ_d, Ω_d, Ω_rd, ξ_I)`.
pub type ClosedLoopState = LieState<2, 21>;

/// Unpacked view of a [`ClosedLoopState`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosedLoopSample {
    pub plant: BodyState,
    pub reference: BodyState,
    pub integral: Vector3<f64>,
}

impl ClosedLoopSample {
    pub fn pack(&self) -> ClosedLoopState {
        let mut v = SVector::<f64, 21>::zeros();
        for (offset, part) in [
            (0, &self.plant.rotor_angles),
            (3, &self.plant.omega),
            (6, &self.plant.rotor_rates),
            (9, &self.reference.rotor_angles),
            (12, &self.reference.omega),
            (15, &self.reference.rotor_rates),
            (18, &self.integral),
        ] {
            v.fixed_rows_mut::<3>(offset).copy_from(part);
        }
        LieState {
            rotations: [self.plant.attitude, self.reference.attitude],
            vector: v,
        }
    }

    pub fn unpack(s: &ClosedLoopState) -> Self {
        let part =
            |offset: usize| -> Vector3<f64> { s.vector.fixed_rows::<3>(offset).into_owned() };
        Self {
            plant: BodyState {
                attitude: s.rotations[0],
                rotor_angles: part(0),
                omega: part(3),
                rotor_rates: part(6),
            },
            reference: BodyState {
                attitude: s.rotations[1],
                rotor_angles: part(9),
                omega: part(12),
                rotor_rates: part(15),
            },
            integral: part(18),
        }
    }

    pub fn error(&self) -> ErrorState {
        let (error, velocity) = error_state(
            &self.plant.attitude,
            &self.plant.omega,
            &self.reference.attitude,
            &self.reference.omega,
        );
        ErrorState {
            error,
            velocity,
            integral: self.integral,
        }
    }
}

/// Closed-loop vector field together with the commands it applies.
pub struct ClosedLoop {
    plant: InertiaParams,
    reference: InertiaParams,
    program: ReferenceProgram,
    controller: AgatController,
    actuation: Actuation,
}

/// Field value and the commands at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosedLoopEval {
    pub tangent: LieTangent<2, 21>,
    pub u_ext: Vector3<f64>,
    pub u_int: Vector3<f64>,
}

impl ClosedLoop {
    pub fn new(cfg: &ScenarioConfig) -> Self {
        Self {
            plant: cfg.plant.params.clone(),
            reference: cfg.reference.params.clone(),
            program: cfg.reference.program,
            controller: cfg.controller(),
            actuation: cfg.actuation,
        }
    }

    pub fn controller(&self) -> &AgatController {
        &self.controller
    }

    pub fn evaluate(&self, t: f64, s: &ClosedLoopState) -> ClosedLoopEval {
        let x = ClosedLoopSample::unpack(s);
        let d_ref = deriv_internal(&self.reference, &x.reference, &self.program.torque(t));
        let u_ext = self.controller.u_ext(
            &x.plant.attitude,
            &x.plant.omega,
            &x.reference.attitude,
            &x.reference.omega,
            &d_ref.omega_dot,
            &x.integral,
        );
        let u_int = control_uint(&self.plant, &u_ext, &x.plant.omega, &x.plant.rotor_rates);
        let d_plant = match self.actuation {
            Actuation::Internal => deriv_internal(&self.plant, &x.plant, &u_int),
            Actuation::External => {
                deriv_external(self.plant.body(), &x.plant.attitude, &x.plant.omega, &u_ext)
            }
        };
        let err = x.error();
        let xi_dot = self
            .controller
            .xi_rate(&err.error, &err.velocity, &err.integral);

        let mut v = SVector::<f64, 21>::zeros();
        for (offset, part) in [
            (0, &d_plant.rotor_angle_rate),
            (3, &d_plant.omega_dot),
            (6, &d_plant.rotor_rate_dot),
            (9, &d_ref.rotor_angle_rate),
            (12, &d_ref.omega_dot),
            (15, &d_ref.rotor_rate_dot),
            (18, &xi_dot),
        ] {
            v.fixed_rows_mut::<3>(offset).copy_from(part);
        }
        ClosedLoopEval {
            tangent: LieTangent {
                angular: [d_plant.body_velocity, d_ref.body_velocity],
                vector: v,
            },
            u_ext,
            u_int,
        }
    }
}

/// Per-sample diagnostics aligned with the trajectory times.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunMetrics {
    pub times: Vec<f64>,
    pub psi: Vec<f64>,
    /// `‖logm(E)‖` in radians.
    pub geodesic_error: Vec<f64>,
    pub ecl: Vec<f64>,
    pub ecl_rate_bound: Vec<f64>,
    /// Whether the Hessian of ψ at `E` satisfies the certificate's bound.
    pub in_certified_region: Vec<bool>,
    /// `‖I u_ext‖₂`, the equivalent body torque.
    pub effort_ext: Vec<f64>,
    /// `‖u_int‖₂`, the rotor torque.
    pub effort_int: Vec<f64>,
    /// `‖RΠ − R(0)Π(0)‖_∞` of the plant.
    pub momentum_drift: Vec<f64>,
    /// Same for the reference body.
    pub reference_momentum_drift: Vec<f64>,
    pub max_orthogonality_error: f64,
    pub feasibility: Feasibility,
}

impl RunMetrics {
    fn with_capacity(n: usize, feasibility: Feasibility) -> Self {
        Self {
            times: Vec::with_capacity(n),
            psi: Vec::with_capacity(n),
            geodesic_error: Vec::with_capacity(n),
            ecl: Vec::with_capacity(n),
            ecl_rate_bound: Vec::with_capacity(n),
            in_certified_region: Vec::with_capacity(n),
            effort_ext: Vec::with_capacity(n),
            effort_int: Vec::with_capacity(n),
            momentum_drift: Vec::with_capacity(n),
            reference_momentum_drift: Vec::with_capacity(n),
            max_orthogonality_error: 0.0,
            feasibility,
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn max_momentum_drift(&self) -> f64 {
        self.momentum_drift.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_reference_momentum_drift(&self) -> f64 {
        self.reference_momentum_drift
            .iter()
            .copied()
            .fold(0.0, f64::max)
    }

    /// First time after which ψ stays below `threshold`.
    pub fn settling_time(&self, threshold: f64) -> Option<f64> {
        match self.psi.iter().rposition(|p| *p >= threshold) {
            None => self.times.first().copied(),
            Some(i) if i + 1 < self.times.len() => Some(self.times[i + 1]),
            Some(_) => None,
        }
    }

    /// Every `stride`-th sample, starting with the first.
    pub fn thinned(&self, stride: usize) -> Self {
        let stride = stride.max(1);
        fn pick<T: Copy>(v: &[T], stride: usize) -> Vec<T> {
            v.iter().step_by(stride).copied().collect()
        }
        Self {
            times: pick(&self.times, stride),
            psi: pick(&self.psi, stride),
            geodesic_error: pick(&self.geodesic_error, stride),
            ecl: pick(&self.ecl, stride),
            ecl_rate_bound: pick(&self.ecl_rate_bound, stride),
            in_certified_region: pick(&self.in_certified_region, stride),
            effort_ext: pick(&self.effort_ext, stride),
            effort_int: pick(&self.effort_int, stride),
            momentum_drift: pick(&self.momentum_drift, stride),
            reference_momentum_drift: pick(&self.reference_momentum_drift, stride),
            max_orthogonality_error: self.max_orthogonality_error,
            feasibility: self.feasibility,
        }
    }
}

/// Stored closed-loop trajectory, the rotor torques at each sample, and metrics.
#[derive(Debug, Clone)]
pub struct ClosedLoopRun {
    pub trajectory: Trajectory<2, 21>,
    pub u_int: Vec<Vector3<f64>>,
    pub metrics: RunMetrics,
}

impl ClosedLoopRun {
    pub fn sample(&self, k: usize) -> ClosedLoopSample {
        ClosedLoopSample::unpack(&self.trajectory.states[k])
    }
}

pub fn initial_closed_loop_state(cfg: &ScenarioConfig) -> Result<ClosedLoopState> {
    Ok(ClosedLoopSample {
        plant: cfg.plant.initial,
        reference: cfg.reference_initial_state()?,
        integral: Vector3::zeros(),
    }
    .pack())
}

pub fn run_closed_loop(cfg: &ScenarioConfig) -> Result<ClosedLoopRun> {
    cfg.validate()?;
    let system = ClosedLoop::new(cfg);
    let field = |t: f64, s: &ClosedLoopState| system.evaluate(t, s).tangent;
    let initial = initial_closed_loop_state(cfg)?;
    let x0 = ClosedLoopSample::unpack(&initial);
    let mu0 = momentum(&cfg.plant.params, &x0.plant).spatial;
    let mu0_ref = momentum(&cfg.reference.params, &x0.reference).spatial;
    let metric = cfg.plant.params.body();
    let weights = &cfg.weights;
    let gains = &cfg.gains;

    let n = cfg.integrator.steps() + 1;
    let mut trajectory = Trajectory {
        times: Vec::with_capacity(n),
        states: Vec::with_capacity(n),
    };
    let mut u_int = Vec::with_capacity(n);
    let mut m = RunMetrics::with_capacity(n, gain_feasible(gains));

    integrate_observed(&field, initial, &cfg.integrator, |_, t, s| {
        let x = ClosedLoopSample::unpack(s);
        let eval = system.evaluate(t, s);
        let err = x.error();
        let spatial = |p: &InertiaParams, b: &BodyState| {
            momentum_spatial(&b.attitude, &momentum_body(p, &b.omega, &b.rotor_rates))
        };
        trajectory.times.push(t);
        trajectory.states.push(*s);
        u_int.push(eval.u_int);
        m.times.push(t);
        m.psi.push(nav_psi(weights, &err.error));
        m.geodesic_error
            .push(geodesic_distance(&x.plant.attitude, &x.reference.attitude));
        m.ecl.push(ecl_value(metric, weights, gains, &err));
        m.ecl_rate_bound
            .push(ecl_rate_bound(metric, weights, gains, &err));
        m.in_certified_region
            .push(in_certified_region(metric, weights, gains, &err.error));
        m.effort_ext.push(metric.flat(&eval.u_ext).norm());
        m.effort_int.push(eval.u_int.norm());
        m.momentum_drift
            .push((spatial(&cfg.plant.params, &x.plant) - mu0).amax());
        m.reference_momentum_drift
            .push((spatial(&cfg.reference.params, &x.reference) - mu0_ref).amax());
        m.max_orthogonality_error = m
            .max_orthogonality_error
            .max(x.plant.attitude.orthogonality_error())
            .max(x.reference.attitude.orthogonality_error());
    })?;

    Ok(ClosedLoopRun {
        trajectory,
        u_int,
        metrics: m,
    })
}

/// Effort series of two laws on the same scenario.
#[derive(Debug, Clone, Serialize)]
pub struct EffortComparison {
    pub times: Vec<f64>,
    pub primary: GainSet,
    pub alternate: GainSet,
    pub primary_ext: Vec<f64>,
    pub primary_int: Vec<f64>,
    pub alternate_ext: Vec<f64>,
    pub alternate_int: Vec<f64>,
}

impl EffortComparison {
    /// `∫‖u‖₂ dt` by the trapezoid rule for each series.
    pub fn integrals(&self) -> EffortIntegrals {
        EffortIntegrals {
            primary_ext: trapezoid(&self.times, &self.primary_ext),
            primary_int: trapezoid(&self.times, &self.primary_int),
            alternate_ext: trapezoid(&self.times, &self.alternate_ext),
            alternate_int: trapezoid(&self.times, &self.alternate_int),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EffortIntegrals {
    pub primary_ext: f64,
    pub primary_int: f64,
    pub alternate_ext: f64,
    pub alternate_int: f64,
}

impl EffortIntegrals {
    /// Alternate over primary body-torque effort.
    pub fn ratio_ext(&self) -> f64 {
        self.alternate_ext / self.primary_ext
    }
}

pub fn trapezoid(times: &[f64], values: &[f64]) -> f64 {
    times
        .windows(2)
        .zip(values.windows(2))
        .map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1]))
        .sum()
}

/// The proportional-derivative baseline: same gains, integral action removed.
pub fn pd_baseline(gains: &GainSet) -> GainSet {
    gains.without_integral()
}

pub fn compare_efforts(cfg: &ScenarioConfig, alternate: &GainSet) -> Result<EffortComparison> {
    let a = run_closed_loop(cfg)?;
    let b = run_closed_loop(&cfg.with_gains(*alternate))?;
    Ok(EffortComparison {
        times: a.metrics.times,
        primary: cfg.gains,
        alternate: *alternate,
        primary_ext: a.metrics.effort_ext,
        primary_int: a.metrics.effort_int,
        alternate_ext: b.metrics.effort_ext,
        alternate_int: b.metrics.effort_int,
    })
}
