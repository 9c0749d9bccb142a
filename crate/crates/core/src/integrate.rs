//! Lie-group time stepping on `SO(3)^G × R^V`.
//!
//! Rotations are advanced as `R ← R expm(θ)` with θ computed in the algebra
//! (Munthe-Kaas), so the rotation part never leaves the group apart from
//! floating-point drift, which optional SVD reprojection removes.

use std::str::FromStr;

use nalgebra::{SVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::liealg::{dexp_inv, expm, project_so3, RotationMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// First-order `R ← R expm(hΩ)`, explicit Euler on the vector part.
    LieEuler,
    /// Classical four-stage Runge-Kutta in exponential coordinates.
    #[default]
    Rk4MuntheKaas,
}

impl Scheme {
    pub fn name(&self) -> &'static str {
        match self {
            Scheme::LieEuler => "lie_euler",
            Scheme::Rk4MuntheKaas => "rk4_munthe_kaas",
        }
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lie_euler" | "euler" => Ok(Scheme::LieEuler),
            "rk4_munthe_kaas" | "rkmk4" | "rk4" => Ok(Scheme::Rk4MuntheKaas),
            other => Err(Error::InvalidIntegrator(format!(
                "unknown scheme '{other}'"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub step: f64,
    pub duration: f64,
    pub scheme: Scheme,
    /// Project rotations back onto SO(3) after every step.
    pub reproject: bool,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            step: 1e-3,
            duration: 30.0,
            scheme: Scheme::Rk4MuntheKaas,
            reproject: true,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step.is_finite() && self.step > 0.0) {
            return Err(Error::InvalidIntegrator(format!(
                "step must be positive, got {}",
                self.step
            )));
        }
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return Err(Error::InvalidIntegrator(format!(
                "duration must be positive, got {}",
                self.duration
            )));
        }
        if self.step > self.duration {
            return Err(Error::InvalidIntegrator("step exceeds duration".into()));
        }
        Ok(())
    }

    /// Number of steps; the final time is `steps() * step`.
    pub fn steps(&self) -> usize {
        ((self.duration / self.step).round() as usize).max(1)
    }
}

/// A point of `SO(3)^G × R^V`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LieState<const G: usize, const V: usize> {
    pub rotations: [RotationMatrix; G],
    pub vector: SVector<f64, V>,
}

/// Left-trivialized tangent vector: `Ṙ_i = R_i hat(angular[i])`, `ẋ = vector`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LieTangent<const G: usize, const V: usize> {
    pub angular: [Vector3<f64>; G],
    pub vector: SVector<f64, V>,
}

impl<const G: usize, const V: usize> LieState<G, V> {
    pub fn is_finite(&self) -> bool {
        self.vector.iter().all(|x| x.is_finite())
            && self
                .rotations
                .iter()
                .all(|r| r.matrix().iter().all(|x| x.is_finite()))
    }

    fn advance(&self, theta: &[Vector3<f64>; G], dx: &SVector<f64, V>) -> Self {
        Self {
            rotations: std::array::from_fn(|i| self.rotations[i] * expm(&theta[i])),
            vector: self.vector + dx,
        }
    }
}

pub trait VectorField<const G: usize, const V: usize> {
    fn eval(&self, t: f64, state: &LieState<G, V>) -> LieTangent<G, V>;
}

impl<F, const G: usize, const V: usize> VectorField<G, V> for F
where
    F: Fn(f64, &LieState<G, V>) -> LieTangent<G, V>,
{
    fn eval(&self, t: f64, state: &LieState<G, V>) -> LieTangent<G, V> {
        self(t, state)
    }
}

/// Sampled solution, `times[k] = k·step`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<const G: usize, const V: usize> {
    pub times: Vec<f64>,
    pub states: Vec<LieState<G, V>>,
}

impl<const G: usize, const V: usize> Trajectory<G, V> {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> Option<&LieState<G, V>> {
        self.states.last()
    }
}

/// θ̇ for `R = R₀ expm(θ)` given the body velocity ω.
fn theta_rate<const G: usize>(
    theta: &[Vector3<f64>; G],
    omega: &[Vector3<f64>; G],
) -> [Vector3<f64>; G] {
    std::array::from_fn(|i| dexp_inv(&(-theta[i]), &omega[i]))
}

fn scale<const G: usize>(a: &[Vector3<f64>; G], s: f64) -> [Vector3<f64>; G] {
    std::array::from_fn(|i| a[i] * s)
}

/// One step of size `h` from `(t, state)`.
pub fn step_lie<F, const G: usize, const V: usize>(
    field: &F,
    t: f64,
    state: &LieState<G, V>,
    h: f64,
    scheme: Scheme,
    reproject: bool,
) -> Result<LieState<G, V>>
where
    F: VectorField<G, V> + ?Sized,
{
    let mut next = match scheme {
        Scheme::LieEuler => {
            let k = field.eval(t, state);
            state.advance(&scale(&k.angular, h), &(k.vector * h))
        }
        Scheme::Rk4MuntheKaas => {
            let k1 = field.eval(t, state);
            let a1 = k1.angular;

            let th2 = scale(&a1, 0.5 * h);
            let k2 = field.eval(t + 0.5 * h, &state.advance(&th2, &(k1.vector * (0.5 * h))));
            let a2 = theta_rate(&th2, &k2.angular);

            let th3 = scale(&a2, 0.5 * h);
            let k3 = field.eval(t + 0.5 * h, &state.advance(&th3, &(k2.vector * (0.5 * h))));
            let a3 = theta_rate(&th3, &k3.angular);

            let th4 = scale(&a3, h);
            let k4 = field.eval(t + h, &state.advance(&th4, &(k3.vector * h)));
            let a4 = theta_rate(&th4, &k4.angular);

            let theta: [Vector3<f64>; G] =
                std::array::from_fn(|i| (a1[i] + 2.0 * a2[i] + 2.0 * a3[i] + a4[i]) * (h / 6.0));
            let dx = (k1.vector + 2.0 * k2.vector + 2.0 * k3.vector + k4.vector) * (h / 6.0);
            state.advance(&theta, &dx)
        }
    };
    if reproject && next.is_finite() {
        for r in next.rotations.iter_mut() {
            *r = project_so3(r.matrix())?;
        }
    }
    Ok(next)
}

/// Integrates over `[0, duration]`, calling `observe(k, t_k, state_k)` at every
/// sample including the initial one.
pub fn integrate_observed<F, O, const G: usize, const V: usize>(
    field: &F,
    initial: LieState<G, V>,
    config: &IntegratorConfig,
    mut observe: O,
) -> Result<LieState<G, V>>
where
    F: VectorField<G, V> + ?Sized,
    O: FnMut(usize, f64, &LieState<G, V>),
{
    config.validate()?;
    if !initial.is_finite() {
        return Err(Error::DivergedState {
            index: 0,
            time: 0.0,
        });
    }
    let mut state = initial;
    observe(0, 0.0, &state);
    for k in 0..config.steps() {
        let t = k as f64 * config.step;
        state = step_lie(
            field,
            t,
            &state,
            config.step,
            config.scheme,
            config.reproject,
        )
        .map_err(|_| Error::DivergedState {
            index: k + 1,
            time: t + config.step,
        })?;
        let t_next = (k + 1) as f64 * config.step;
        if !state.is_finite() {
            return Err(Error::DivergedState {
                index: k + 1,
                time: t_next,
            });
        }
        observe(k + 1, t_next, &state);
    }
    Ok(state)
}

pub fn integrate<F, const G: usize, const V: usize>(
    field: &F,
    initial: LieState<G, V>,
    config: &IntegratorConfig,
) -> Result<Trajectory<G, V>>
where
    F: VectorField<G, V> + ?Sized,
{
    let n = config.steps() + 1;
    let mut traj = Trajectory {
        times: Vec::with_capacity(n),
        states: Vec::with_capacity(n),
    };
    integrate_observed(field, initial, config, |_, t, s| {
        traj.times.push(t);
        traj.states.push(*s);
    })?;
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use nalgebra::{Matrix3, Vector3};

    use super::*;
    use crate::liealg::{adstar, InertiaMetric};

    type Free = LieState<1, 3>;

    fn free_body(inertia: InertiaMetric) -> impl Fn(f64, &Free) -> LieTangent<1, 3> {
        move |_, s| {
            let w = s.vector;
            LieTangent {
                angular: [w],
                vector: inertia.sharp(&adstar(&w, &inertia.flat(&w))),
            }
        }
    }

    fn inertia() -> InertiaMetric {
        InertiaMetric::new(Matrix3::new(4.0, 1.0, 1.0, 1.0, 5.2, 2.0, 1.0, 2.0, 6.3)).unwrap()
    }

    fn initial() -> Free {
        LieState {
            rotations: [expm(&Vector3::new(0.3, -0.2, 0.5))],
            vector: Vector3::new(0.4, -1.1, 0.8),
        }
    }

    fn run(h: f64, t: f64, scheme: Scheme) -> Free {
        let cfg = IntegratorConfig {
            step: h,
            duration: t,
            scheme,
            reproject: false,
        };
        let field = free_body(inertia());
        integrate_observed(&field, initial(), &cfg, |_, _, _| {}).unwrap()
    }

    fn distance(a: &Free, b: &Free) -> f64 {
        (a.rotations[0].matrix() - b.rotations[0].matrix()).norm() + (a.vector - b.vector).norm()
    }

    #[test]
    fn config_validation() {
        assert!(IntegratorConfig::default().validate().is_ok());
        for (step, duration) in [
            (0.0, 1.0),
            (-1.0, 1.0),
            (0.1, 0.0),
            (2.0, 1.0),
            (f64::NAN, 1.0),
        ] {
            let c = IntegratorConfig {
                step,
                duration,
                ..Default::default()
            };
            assert!(matches!(c.validate(), Err(Error::InvalidIntegrator(_))));
        }
        assert_eq!("rk4".parse::<Scheme>().unwrap(), Scheme::Rk4MuntheKaas);
        assert!("verlet".parse::<Scheme>().is_err());
    }

    #[test]
    fn single_step_duration_gives_two_samples() {
        let cfg = IntegratorConfig {
            step: 0.01,
            duration: 0.01,
            ..Default::default()
        };
        let traj = integrate(&free_body(inertia()), initial(), &cfg).unwrap();
        assert_eq!(traj.times, vec![0.0, 0.01]);
        assert_eq!(traj.states[0], initial());
    }

    #[test]
    fn free_body_invariants_are_conserved() {
        let metric = inertia();
        let cfg = IntegratorConfig {
            step: 1e-3,
            duration: 10.0,
            ..Default::default()
        };
        let s0 = initial();
        let energy = |s: &Free| 0.5 * metric.inner(&s.vector, &s.vector);
        let spatial = |s: &Free| s.rotations[0] * metric.flat(&s.vector);
        let mut max_energy: f64 = 0.0;
        let mut max_momentum: f64 = 0.0;
        integrate_observed(&free_body(metric), s0, &cfg, |_, _, s| {
            max_energy = max_energy.max((energy(s) - energy(&s0)).abs());
            max_momentum = max_momentum.max((spatial(s) - spatial(&s0)).norm());
            assert!(s.rotations[0].orthogonality_error() < 1e-12);
        })
        .unwrap();
        assert!(max_energy < 1e-8, "{max_energy}");
        assert!(max_momentum < 1e-8, "{max_momentum}");
    }

    #[test]
    fn rkmk4_converges_at_fourth_order() {
        let t = 2.0;
        let (h1, h2, h3) = (0.04, 0.02, 0.01);
        let (a, b, c) = (
            run(h1, t, Scheme::Rk4MuntheKaas),
            run(h2, t, Scheme::Rk4MuntheKaas),
            run(h3, t, Scheme::Rk4MuntheKaas),
        );
        let order = (distance(&a, &b) / distance(&b, &c)).log2();
        assert!((3.7..=4.3).contains(&order), "{order}");
    }

    #[test]
    fn lie_euler_converges_at_first_order() {
        let t = 1.0;
        let (a, b, c) = (
            run(0.01, t, Scheme::LieEuler),
            run(0.005, t, Scheme::LieEuler),
            run(0.0025, t, Scheme::LieEuler),
        );
        let order = (distance(&a, &b) / distance(&b, &c)).log2();
        assert!((0.8..=1.2).contains(&order), "{order}");
    }

    #[test]
    fn schemes_agree_at_small_step() {
        let a = run(1e-6, 0.1, Scheme::LieEuler);
        let b = run(1e-6, 0.1, Scheme::Rk4MuntheKaas);
        assert!(distance(&a, &b) < 1e-6);
    }

    #[test]
    fn integration_is_deterministic() {
        let cfg = IntegratorConfig {
            step: 1e-2,
            duration: 1.0,
            ..Default::default()
        };
        let field = free_body(inertia());
        let a = integrate(&field, initial(), &cfg).unwrap();
        let b = integrate(&field, initial(), &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn divergence_is_reported() {
        let field = |_: f64, s: &Free| LieTangent {
            angular: [Vector3::zeros()],
            vector: s.vector.map(|x| x * x * 1e3),
        };
        let s0 = LieState {
            rotations: [RotationMatrix::identity()],
            vector: Vector3::new(10.0, 0.0, 0.0),
        };
        let cfg = IntegratorConfig {
            step: 0.1,
            duration: 10.0,
            ..Default::default()
        };
        assert!(matches!(
            integrate(&field, s0, &cfg),
            Err(Error::DivergedState { .. })
        ));
    }

    #[test]
    fn constant_velocity_is_exact() {
        let w = Vector3::new(0.3, -0.7, 1.2);
        let field = move |_: f64, _: &LieState<1, 0>| LieTangent {
            angular: [w],
            vector: SVector::<f64, 0>::zeros(),
        };
        let s0 = LieState {
            rotations: [RotationMatrix::identity()],
            vector: SVector::<f64, 0>::zeros(),
        };
        let cfg = IntegratorConfig {
            step: 0.1,
            duration: 1.0,
            scheme: Scheme::Rk4MuntheKaas,
            reproject: false,
        };
        let end = integrate_observed(&field, s0, &cfg, |_, _, _| {}).unwrap();
        assert!((end.rotations[0].matrix() - expm(&w).matrix()).norm() < 1e-13);
    }
}
