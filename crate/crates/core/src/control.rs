//! PID tracking on SO(3) and its certification.
//!
//! The configuration error is `E = R_d Rᵀ` with left-trivialized velocity
//! `η = R(Ω_d − Ω)`. The controller shapes the error into the dissipative
//! system
//!
//! ```text
//! ∇_Ė Ė = −k_p grad ψ(E) − k_d Ė − k_I ξ_I,      ∇_Ė ξ_I = grad ψ(E)
//! ```
//!
//! on SO(3) with the left-invariant metric of the rigid-body inertia `I`, where
//! `ψ(E) = tr(P(I − E))`. The energy `E_cl` below decreases along this system
//! whenever the gains pass [`gain_feasible`] and the state stays where the
//! Hessian of ψ is positive and bounded by `mu_hess`.

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dynamics::InertiaParams;
use crate::error::{Error, Result};
use crate::liealg::{adstar, expm, hat, is_spd, skew_vee, InertiaMetric, RotationMatrix};

/// SPD weight matrix `P` of the navigation function `ψ(E) = tr(P(I − E))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NavigationWeights(Matrix3<f64>);

impl NavigationWeights {
    pub fn new(p: Matrix3<f64>) -> Result<Self> {
        if !is_spd(&p) {
            return Err(Error::InvalidWeights);
        }
        Ok(Self(p))
    }

    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    /// Repeated eigenvalues of `P` make the critical set of ψ degenerate
    /// (`P = I` has a continuum of maxima at angle π).
    pub fn has_repeated_eigenvalues(&self, tol: f64) -> bool {
        let mut e: Vec<f64> = self.0.symmetric_eigenvalues().iter().copied().collect();
        e.sort_by(f64::total_cmp);
        e.windows(2)
            .any(|w| (w[1] - w[0]).abs() <= tol * w[1].abs().max(1.0))
    }
}

impl Default for NavigationWeights {
    fn default() -> Self {
        Self::identity()
    }
}

/// `ψ(E) = tr(P(I − E))`.
pub fn nav_psi(p: &NavigationWeights, e: &RotationMatrix) -> f64 {
    (p.0 * (Matrix3::identity() - e.matrix())).trace()
}

/// `vee(skew(PE))`. The left-trivialized differential of ψ is twice this vector:
/// `d/dt ψ(E expm(t v)) |₀ = 2 ⟨nav_dpsi(P, E), v⟩`.
pub fn nav_dpsi(p: &NavigationWeights, e: &RotationMatrix) -> Vector3<f64> {
    skew_vee(&(p.0 * e.matrix()))
}

/// Left-trivialized differential `dψ(E)` as a covector.
pub fn nav_differential(p: &NavigationWeights, e: &RotationMatrix) -> Vector3<f64> {
    2.0 * nav_dpsi(p, e)
}

/// `grad ψ(E) = 𝕀⁻¹ dψ(E)` in left-trivialized coordinates.
pub fn nav_gradient(
    metric: &InertiaMetric,
    p: &NavigationWeights,
    e: &RotationMatrix,
) -> Vector3<f64> {
    metric.sharp(&nav_differential(p, e))
}

/// Covariant Hessian of ψ as a bilinear form on left-trivialized vectors:
/// `H(x, y) = D(dψ)(x)·y − dψ(∇_x y)`.
pub fn nav_hessian(
    metric: &InertiaMetric,
    p: &NavigationWeights,
    e: &RotationMatrix,
) -> Matrix3<f64> {
    let d = nav_differential(p, e);
    let pe = p.0 * e.matrix();
    Matrix3::from_fn(|i, j| {
        let x = Vector3::ith(i, 1.0);
        let y = Vector3::ith(j, 1.0);
        let second = 2.0 * skew_vee(&(pe * hat(&x).matrix()));
        second.dot(&y) - d.dot(&metric.connection(&x, &y))
    })
}

/// Eigenvalues (ascending) of the Hessian operator `𝕀⁻¹H` relative to the metric.
pub fn hessian_spectrum(
    metric: &InertiaMetric,
    p: &NavigationWeights,
    e: &RotationMatrix,
) -> [f64; 3] {
    let h = nav_hessian(metric, p, e);
    let h = 0.5 * (h + h.transpose());
    let l = metric.matrix().cholesky().expect("metric is SPD").l();
    let l_inv = l.try_inverse().expect("cholesky factor is invertible");
    let sym = l_inv * h * l_inv.transpose();
    let mut e: [f64; 3] = sym.symmetric_eigenvalues().into();
    e.sort_by(f64::total_cmp);
    e
}

/// Configuration error `E = R_d Rᵀ` and its left-trivialized velocity `η = R(Ω_d − Ω)`.
pub fn error_state(
    r: &RotationMatrix,
    omega: &Vector3<f64>,
    r_d: &RotationMatrix,
    omega_d: &Vector3<f64>,
) -> (RotationMatrix, Vector3<f64>) {
    let e = *r_d * r.transpose();
    let eta = r * &(omega_d - omega);
    (e, eta)
}

/// Error configuration, velocity and integral state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorState {
    pub error: RotationMatrix,
    pub velocity: Vector3<f64>,
    pub integral: Vector3<f64>,
}

impl ErrorState {
    pub fn zero() -> Self {
        Self {
            error: RotationMatrix::identity(),
            velocity: Vector3::zeros(),
            integral: Vector3::zeros(),
        }
    }
}

/// Left-trivialized rate of the integral state defined by `∇_Ė ξ_I = grad ψ(E)`:
/// `ξ̇_I = grad ψ(E) − ∇_η ξ_I`.
pub fn xi_i_deriv(
    metric: &InertiaMetric,
    p: &NavigationWeights,
    e: &RotationMatrix,
    eta: &Vector3<f64>,
    xi: &Vector3<f64>,
) -> Vector3<f64> {
    nav_gradient(metric, p, e) - metric.connection(eta, xi)
}

/// PID gains and the constants of the Lyapunov certificate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GainSet {
    pub kp: f64,
    pub kd: f64,
    pub ki: f64,
    pub kappa: f64,
    pub sigma: f64,
    pub alpha: f64,
    pub beta: f64,
    pub tau: f64,
    pub delta: f64,
    pub mu_hess: f64,
    pub lambda_sup: f64,
}

impl GainSet {
    /// The same proportional and derivative gains with the integral action removed.
    pub fn without_integral(&self) -> Self {
        Self {
            ki: 0.0,
            alpha: 0.0,
            beta: 0.0,
            tau: 0.0,
            delta: 0.0,
            ..*self
        }
    }

    /// Open interval `(1/μ, 2/μ)` that κ must lie in.
    pub fn kappa_range(mu_hess: f64) -> (f64, f64) {
        (1.0 / mu_hess, 2.0 / mu_hess)
    }
}

pub fn gain_derive(
    kp: f64,
    kd: f64,
    ki: f64,
    kappa: f64,
    mu_hess: f64,
    lambda_sup: f64,
) -> Result<GainSet> {
    for (name, value) in [
        ("kp", kp),
        ("kd", kd),
        ("ki", ki),
        ("mu_hess", mu_hess),
        ("lambda_sup", lambda_sup),
    ] {
        if !(value.is_finite() && value > 0.0) {
            return Err(Error::InvalidGains(format!(
                "{name} must be positive, got {value}"
            )));
        }
    }
    let (lower, upper) = GainSet::kappa_range(mu_hess);
    if !(kappa > lower && kappa < upper) {
        return Err(Error::KappaOutOfRange {
            kappa,
            lower,
            upper,
        });
    }
    let beta = ki / kd;
    let alpha = beta / kd;
    Ok(GainSet {
        kp,
        kd,
        ki,
        kappa,
        sigma: 2.0 - mu_hess * kappa,
        alpha,
        beta,
        tau: kp * beta + alpha * ki,
        delta: 2.0 * kappa * ki,
        mu_hess,
        lambda_sup,
    })
}

/// Decay-rate matrix of the certificate after the cross terms are cancelled.
pub fn q_matrix(g: &GainSet) -> Matrix3<f64> {
    let q11 = g.kd - g.mu_hess * g.ki / (g.kd * g.kd);
    let q22 = g.ki / (g.kd * g.kd) * (g.kp - 2.0 * g.kappa * g.kd * g.kd);
    let q33 = g.ki * g.ki / g.kd;
    let q13 = -g.sigma * g.ki;
    Matrix3::new(
        q11, 0.0, q13, //
        0.0, q22, 0.0, //
        q13, 0.0, q33,
    )
}

pub fn leading_principal_minors(q: &Matrix3<f64>) -> [f64; 3] {
    [
        q[(0, 0)],
        q[(0, 0)] * q[(1, 1)] - q[(0, 1)] * q[(1, 0)],
        q.determinant(),
    ]
}

/// Verdict of the gain inequalities, with both sides of each.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Feasibility {
    pub feasible: bool,
    /// `max{2κk_d², k_p floor for E_cl positivity}`.
    pub kp_floor: f64,
    pub kp_floor_q: f64,
    pub kp_floor_energy: f64,
    pub kp_ok: bool,
    /// `(k_d³/μ)(1 − σ²)`.
    pub ki_ceiling: f64,
    pub ki_ok: bool,
    pub minors: [f64; 3],
    pub q_positive_definite: bool,
}

pub fn gain_feasible(g: &GainSet) -> Feasibility {
    let kp_floor_q = 2.0 * g.kappa * g.kd * g.kd;
    let kp_floor_energy = kp_floor_for_energy(g.kd, g.ki, g.kappa, g.lambda_sup);
    let kp_floor = kp_floor_q.max(kp_floor_energy);
    let ki_ceiling = ki_ceiling(g.kd, g.sigma, g.mu_hess);
    let minors = leading_principal_minors(&q_matrix(g));
    let kp_ok = g.kp > kp_floor;
    let ki_ok = g.ki > 0.0 && g.ki < ki_ceiling;
    Feasibility {
        feasible: kp_ok && ki_ok,
        kp_floor,
        kp_floor_q,
        kp_floor_energy,
        kp_ok,
        ki_ceiling,
        ki_ok,
        minors,
        q_positive_definite: minors.iter().all(|m| *m > 0.0),
    }
}

fn kp_floor_for_energy(kd: f64, ki: f64, kappa: f64, lambda: f64) -> f64 {
    let inner = 1.0
        + 4.0 * kd.powi(3) * (ki * ki + 4.0 * kappa * kappa * kd.powi(6)) / (lambda * ki.powi(3));
    lambda * ki * ki / (2.0 * kd.powi(4)) * (1.0 + inner.sqrt())
}

fn ki_ceiling(kd: f64, sigma: f64, mu: f64) -> f64 {
    kd.powi(3) / mu * (1.0 - sigma * sigma)
}

/// Knobs for [`synthesize_gains`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SynthesisOptions {
    pub kd: f64,
    /// κ; defaults to the middle of `(1/μ, 2/μ)`.
    pub kappa: Option<f64>,
    /// `k_I` as a fraction of its ceiling, in `(0, 1)`.
    pub ki_fraction: f64,
    /// `k_p` as a multiple of its floor, `> 1`.
    pub kp_margin: f64,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        Self {
            kd: 1.0,
            kappa: None,
            ki_fraction: 0.5,
            kp_margin: 1.5,
        }
    }
}

/// Picks gains that satisfy both certificate inequalities strictly.
pub fn synthesize_gains(opts: &SynthesisOptions, mu_hess: f64, lambda_sup: f64) -> Result<GainSet> {
    if !(opts.kd.is_finite() && opts.kd > 0.0) {
        return Err(Error::InvalidGains(format!(
            "kd must be positive, got {}",
            opts.kd
        )));
    }
    if !(opts.ki_fraction > 0.0 && opts.ki_fraction < 1.0) {
        return Err(Error::InvalidGains("ki_fraction must lie in (0, 1)".into()));
    }
    if !(opts.kp_margin > 1.0 && opts.kp_margin.is_finite()) {
        return Err(Error::InvalidGains("kp_margin must exceed 1".into()));
    }
    if !(mu_hess.is_finite() && mu_hess > 0.0 && lambda_sup.is_finite() && lambda_sup > 0.0) {
        return Err(Error::InvalidGains(
            "mu_hess and lambda_sup must be positive".into(),
        ));
    }
    let (lower, upper) = GainSet::kappa_range(mu_hess);
    let kappa = opts.kappa.unwrap_or(0.5 * (lower + upper));
    if !(kappa > lower && kappa < upper) {
        return Err(Error::KappaOutOfRange {
            kappa,
            lower,
            upper,
        });
    }
    let sigma = 2.0 - mu_hess * kappa;
    let ki = opts.ki_fraction * ki_ceiling(opts.kd, sigma, mu_hess);
    let floor =
        (2.0 * kappa * opts.kd * opts.kd).max(kp_floor_for_energy(opts.kd, ki, kappa, lambda_sup));
    gain_derive(
        opts.kp_margin * floor,
        opts.kd,
        ki,
        kappa,
        mu_hess,
        lambda_sup,
    )
}

/// Hessian and gradient-ratio constants from the extreme eigenvalues of `I`:
/// `(2(λ_min + λ_max)/λ_min, 2λ_max/λ_min²)`.
pub fn inertia_bound_constants(inertia: &Matrix3<f64>) -> (f64, f64) {
    let e = inertia.symmetric_eigenvalues();
    let (lo, hi) = (e.min(), e.max());
    (2.0 * (lo + hi) / lo, 2.0 * hi / (lo * lo))
}

/// Sampled estimates of the Hessian bound and of `sup |grad ψ|² / 2ψ` over the
/// ball `‖logm(E)‖ ≤ radius`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundEstimate {
    pub mu_hess: f64,
    pub lambda_sup: f64,
    pub samples: usize,
    pub radius: f64,
}

pub fn estimate_bounds(
    metric: &InertiaMetric,
    p: &NavigationWeights,
    radius: f64,
    samples: usize,
    seed: u64,
) -> BoundEstimate {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mu: f64 = 0.0;
    let mut lambda: f64 = 0.0;
    for _ in 0..samples {
        let dir = Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0));
        if dir.norm() < 1e-6 {
            continue;
        }
        let angle = radius * rng.random_range(0.0..1.0f64).cbrt();
        let e = expm(&(dir.normalize() * angle));
        let spec = hessian_spectrum(metric, p, &e);
        mu = mu.max(spec[0].abs()).max(spec[2].abs());
        let psi = nav_psi(p, &e);
        if psi > 1e-12 {
            let grad = nav_gradient(metric, p, &e);
            lambda = lambda.max(metric.inner(&grad, &grad) / (2.0 * psi));
        }
    }
    BoundEstimate {
        mu_hess: mu,
        lambda_sup: lambda,
        samples,
        radius,
    }
}

/// `E_cl = ½⟨Ė,Ė⟩ + k_pψ + (τ/2)⟨ξ,ξ⟩ + α⟨grad ψ,Ė⟩ + β⟨ξ,Ė⟩ + δ⟨grad ψ,ξ⟩`.
pub fn ecl_value(
    metric: &InertiaMetric,
    p: &NavigationWeights,
    g: &GainSet,
    err: &ErrorState,
) -> f64 {
    let eta = &err.velocity;
    let xi = &err.integral;
    let grad = nav_gradient(metric, p, &err.error);
    0.5 * metric.inner(eta, eta)
        + g.kp * nav_psi(p, &err.error)
        + 0.5 * g.tau * metric.inner(xi, xi)
        + g.alpha * metric.inner(&grad, eta)
        + g.beta * metric.inner(xi, eta)
        + g.delta * metric.inner(&grad, xi)
}

/// `−vQvᵀ` with `v = (‖Ė‖, ‖grad ψ‖, ‖ξ_I‖)`.
pub fn ecl_rate_bound(
    metric: &InertiaMetric,
    p: &NavigationWeights,
    g: &GainSet,
    err: &ErrorState,
) -> f64 {
    let grad = nav_gradient(metric, p, &err.error);
    let v = Vector3::new(
        metric.norm(&err.velocity),
        metric.norm(&grad),
        metric.norm(&err.integral),
    );
    -(v.transpose() * q_matrix(g) * v)[(0, 0)]
}

/// True when the Hessian operator spectrum lies in `(0, mu_hess)`, the region
/// where the certificate's Hessian bound holds.
pub fn in_certified_region(
    metric: &InertiaMetric,
    p: &NavigationWeights,
    g: &GainSet,
    e: &RotationMatrix,
) -> bool {
    let spec = hessian_spectrum(metric, p, e);
    spec[0] > 0.0 && spec[2] < g.mu_hess
}

/// PID tracking law for the externally actuated rigid body.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgatController {
    metric: InertiaMetric,
    weights: NavigationWeights,
    gains: GainSet,
}

impl AgatController {
    /// `metric` is the rigid-body inertia `I` of the plant.
    pub fn new(metric: InertiaMetric, weights: NavigationWeights, gains: GainSet) -> Self {
        Self {
            metric,
            weights,
            gains,
        }
    }

    pub fn metric(&self) -> &InertiaMetric {
        &self.metric
    }

    pub fn weights(&self) -> &NavigationWeights {
        &self.weights
    }

    pub fn gains(&self) -> &GainSet {
        &self.gains
    }

    /// Prescribed error acceleration `η̇ = −∇_η η − k_p grad ψ − k_d η − k_I ξ_I`.
    pub fn error_acceleration(
        &self,
        e: &RotationMatrix,
        eta: &Vector3<f64>,
        xi: &Vector3<f64>,
    ) -> Vector3<f64> {
        let g = &self.gains;
        -self.metric.connection(eta, eta)
            - g.kp * nav_gradient(&self.metric, &self.weights, e)
            - g.kd * eta
            - g.ki * xi
    }

    /// Angular-acceleration command `u_ext` for `Ω̇ = I⁻¹(IΩ × Ω) + u_ext`.
    ///
    /// From `η̇ = R(Ω × Ω_d + Ω̇_d − Ω̇)`:
    /// `u_ext = Ω̇_d + Ω × Ω_d − Rᵀ η̇* − I⁻¹(IΩ × Ω)`.
    #[allow(clippy::too_many_arguments)]
    pub fn u_ext(
        &self,
        r: &RotationMatrix,
        omega: &Vector3<f64>,
        r_d: &RotationMatrix,
        omega_d: &Vector3<f64>,
        omega_d_dot: &Vector3<f64>,
        xi: &Vector3<f64>,
    ) -> Vector3<f64> {
        let (e, eta) = error_state(r, omega, r_d, omega_d);
        let target = self.error_acceleration(&e, &eta, xi);
        let euler = self.metric.sharp(&adstar(omega, &self.metric.flat(omega)));
        omega_d_dot + omega.cross(omega_d) - r.matrix().transpose() * target - euler
    }

    pub fn xi_rate(
        &self,
        e: &RotationMatrix,
        eta: &Vector3<f64>,
        xi: &Vector3<f64>,
    ) -> Vector3<f64> {
        xi_i_deriv(&self.metric, &self.weights, e, eta, xi)
    }

    pub fn energy(&self, err: &ErrorState) -> f64 {
        ecl_value(&self.metric, &self.weights, &self.gains, err)
    }

    pub fn energy_rate_bound(&self, err: &ErrorState) -> f64 {
        ecl_rate_bound(&self.metric, &self.weights, &self.gains, err)
    }
}

/// Free-function form of [`AgatController::u_ext`].
#[allow(clippy::too_many_arguments)]
pub fn control_uext(
    inertia: &InertiaMetric,
    p: &NavigationWeights,
    g: &GainSet,
    r: &RotationMatrix,
    omega: &Vector3<f64>,
    r_d: &RotationMatrix,
    omega_d: &Vector3<f64>,
    omega_d_dot: &Vector3<f64>,
    xi: &Vector3<f64>,
) -> Vector3<f64> {
    AgatController::new(*inertia, *p, *g).u_ext(r, omega, r_d, omega_d, omega_d_dot, xi)
}

/// Body torque `I u_ext` corresponding to an acceleration command.
pub fn body_torque(p: &InertiaParams, u_ext: &Vector3<f64>) -> Vector3<f64> {
    p.body().flat(u_ext)
}

/// Rotor torques `u_int = −I u_ext + K(Ω + Ω_r) × Ω` that make the body obey
/// `Ω̇ = I⁻¹(IΩ × Ω) + u_ext`.
pub fn control_uint(
    p: &InertiaParams,
    u_ext: &Vector3<f64>,
    omega: &Vector3<f64>,
    omega_r: &Vector3<f64>,
) -> Vector3<f64> {
    let rotor_momentum = p.rotor().component_mul(&(omega + omega_r));
    -body_torque(p, u_ext) + rotor_momentum.cross(omega)
}
