//! SO(3) and so(3) primitives.
//!
//! Conventions used throughout the crate:
//!
//! * `hat(e3)` has `+1` at entry `(1, 0)` (zero-based), so `hat(v) * w == v × w`.
//! * The Lie bracket on so(3) in vector form is the cross product, `[a, b] = a × b`.
//! * The coadjoint action is `ad*_ξ μ = μ × ξ`, which turns the Euler–Poincaré
//!   equation into the familiar Euler equation `I Ω̇ = I Ω × Ω`.

use std::ops::Mul;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Symmetry tolerance accepted by [`vee`].
pub const SKEW_TOLERANCE: f64 = 1e-12;
/// Orthogonality tolerance accepted by [`RotationMatrix::try_new`].
pub const ORTHOGONALITY_TOLERANCE: f64 = 1e-9;

const SMALL_ANGLE: f64 = 1e-8;
// Below this distance from π the logarithm switches to the eigenvector branch.
const NEAR_PI: f64 = 1e-3;

/// A 3×3 skew-symmetric matrix, the matrix form of an so(3) element.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SkewMatrix(Matrix3<f64>);

impl SkewMatrix {
    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn into_inner(self) -> Matrix3<f64> {
        self.0
    }

    /// Vector form; infallible because the matrix is skew by construction.
    pub fn vee(&self) -> Vector3<f64> {
        Vector3::new(self.0[(2, 1)], self.0[(0, 2)], self.0[(1, 0)])
    }
}

/// An element of SO(3).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[[f64; 3]; 3]", into = "[[f64; 3]; 3]")]
pub struct RotationMatrix(Matrix3<f64>);

impl RotationMatrix {
    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    /// Validates orthogonality (`‖RᵀR − I‖_F ≤ 1e-9`) and orientation.
    pub fn try_new(m: Matrix3<f64>) -> Result<Self> {
        if !m.iter().all(|x| x.is_finite()) {
            return Err(Error::NotRotation("non-finite entry".into()));
        }
        let drift = orthogonality_error(&m);
        if drift > ORTHOGONALITY_TOLERANCE {
            return Err(Error::NotRotation(format!(
                "orthogonality error {drift:.3e}"
            )));
        }
        if m.determinant() <= 0.0 {
            return Err(Error::NotRotation("determinant is not positive".into()));
        }
        Ok(Self(m))
    }

    /// Wraps a matrix the caller knows to be a rotation (e.g. an `expm` product).
    pub fn new_unchecked(m: Matrix3<f64>) -> Self {
        Self(m)
    }

    /// Row-major constructor used by configuration code.
    pub fn from_row_slice(values: &[f64]) -> Result<Self> {
        if values.len() != 9 {
            return Err(Error::NotRotation(format!(
                "expected 9 entries, got {}",
                values.len()
            )));
        }
        Self::try_new(Matrix3::from_row_slice(values))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    /// `‖RᵀR − I‖_F`.
    pub fn orthogonality_error(&self) -> f64 {
        orthogonality_error(&self.0)
    }

    pub fn row_major(&self) -> [f64; 9] {
        let m = &self.0;
        [
            m[(0, 0)],
            m[(0, 1)],
            m[(0, 2)],
            m[(1, 0)],
            m[(1, 1)],
            m[(1, 2)],
            m[(2, 0)],
            m[(2, 1)],
            m[(2, 2)],
        ]
    }
}

impl Default for RotationMatrix {
    fn default() -> Self {
        Self::identity()
    }
}

impl Mul for RotationMatrix {
    type Output = RotationMatrix;

    fn mul(self, rhs: RotationMatrix) -> RotationMatrix {
        RotationMatrix(self.0 * rhs.0)
    }
}

impl Mul<Vector3<f64>> for RotationMatrix {
    type Output = Vector3<f64>;

    fn mul(self, rhs: Vector3<f64>) -> Vector3<f64> {
        self.0 * rhs
    }
}

impl Mul<&Vector3<f64>> for &RotationMatrix {
    type Output = Vector3<f64>;

    fn mul(self, rhs: &Vector3<f64>) -> Vector3<f64> {
        self.0 * rhs
    }
}

impl TryFrom<[[f64; 3]; 3]> for RotationMatrix {
    type Error = Error;

    fn try_from(rows: [[f64; 3]; 3]) -> Result<Self> {
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::from_row_slice(&flat)
    }
}

impl From<RotationMatrix> for [[f64; 3]; 3] {
    fn from(r: RotationMatrix) -> Self {
        let m = r.0;
        [
            [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
            [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
            [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
        ]
    }
}

fn orthogonality_error(m: &Matrix3<f64>) -> f64 {
    (m.transpose() * m - Matrix3::identity()).norm()
}

pub fn hat(v: &Vector3<f64>) -> SkewMatrix {
    SkewMatrix(Matrix3::new(
        0.0, -v.z, v.y, //
        v.z, 0.0, -v.x, //
        -v.y, v.x, 0.0,
    ))
}

/// Inverse of [`hat`]. Rejects matrices whose symmetric part exceeds [`SKEW_TOLERANCE`].
pub fn vee(m: &Matrix3<f64>) -> Result<Vector3<f64>> {
    let asymmetry = (m + m.transpose()).abs().max();
    if asymmetry.is_nan() || asymmetry > SKEW_TOLERANCE {
        return Err(Error::NotSkew { asymmetry });
    }
    Ok(Vector3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)]))
}

/// Vector form of the skew-symmetric part `(M − Mᵀ)/2`.
pub fn skew_vee(m: &Matrix3<f64>) -> Vector3<f64> {
    0.5 * Vector3::new(
        m[(2, 1)] - m[(1, 2)],
        m[(0, 2)] - m[(2, 0)],
        m[(1, 0)] - m[(0, 1)],
    )
}

/// Exponential map so(3) → SO(3) (Rodrigues).
pub fn expm(v: &Vector3<f64>) -> RotationMatrix {
    let theta = v.norm();
    let k = hat(v).into_inner();
    let k2 = k * k;
    let (a, b) = if theta < SMALL_ANGLE {
        (1.0 - theta * theta / 6.0, 0.5 - theta * theta / 24.0)
    } else {
        (theta.sin() / theta, (1.0 - theta.cos()) / (theta * theta))
    };
    RotationMatrix(Matrix3::identity() + k * a + k2 * b)
}

/// Logarithm SO(3) → so(3), returning the rotation vector with norm in `[0, π]`.
pub fn logm(r: &RotationMatrix) -> Vector3<f64> {
    let m = r.matrix();
    let s = skew_vee(m);
    let sin_theta = s.norm();
    let cos_theta = 0.5 * (m.trace() - 1.0);
    let theta = sin_theta.atan2(cos_theta);

    if theta < SMALL_ANGLE {
        return s * (1.0 + theta * theta / 6.0);
    }
    if std::f64::consts::PI - theta > NEAR_PI {
        return s * (theta / sin_theta);
    }

    // Near π the skew part carries no usable magnitude; recover the axis from
    // the symmetric part n nᵀ = (sym(R) − cos θ I) / (1 − cos θ).
    let sym = 0.5 * (m + m.transpose());
    let nn = (sym - Matrix3::identity() * cos_theta) / (1.0 - cos_theta);
    let (i, _) = (0..3)
        .map(|i| (i, nn[(i, i)]))
        .fold((0, f64::MIN), |best, c| if c.1 > best.1 { c } else { best });
    let pivot = nn[(i, i)].max(0.0).sqrt();
    let mut axis = Vector3::from_fn(|j, _| nn[(i, j)] / pivot);
    axis.normalize_mut();
    if axis.dot(&s) < 0.0 {
        axis = -axis;
    }
    axis * theta
}

/// Geodesic (bi-invariant) distance `‖logm(Aᵀ B)‖`.
pub fn geodesic_distance(a: &RotationMatrix, b: &RotationMatrix) -> f64 {
    logm(&(a.transpose() * *b)).norm()
}

/// Orthogonal polar factor of `m`, i.e. the closest rotation in Frobenius norm.
pub fn project_so3(m: &Matrix3<f64>) -> Result<RotationMatrix> {
    let svd = m.svd(true, true);
    let min_singular = svd.singular_values.min();
    if min_singular.is_nan() || min_singular < 1e-12 {
        return Err(Error::Degenerate { min_singular });
    }
    if m.determinant() <= 0.0 {
        return Err(Error::NotRotation("determinant is not positive".into()));
    }
    let (u, v_t) = (svd.u.expect("u requested"), svd.v_t.expect("v_t requested"));
    Ok(RotationMatrix(u * v_t))
}

/// Coadjoint action `ad*_ξ μ = μ × ξ`.
pub fn adstar(xi: &Vector3<f64>, mu: &Vector3<f64>) -> Vector3<f64> {
    mu.cross(xi)
}

/// `dexp⁻¹_u(v) = v − ½[u, v] + c(θ)[u, [u, v]]` in closed form for so(3).
///
/// With the left trivialization, `R = R₀ expm(θ)` solves `Ṙ = R hat(ω)` when
/// `θ̇ = dexp_inv(−θ, ω)`.
pub fn dexp_inv(u: &Vector3<f64>, v: &Vector3<f64>) -> Vector3<f64> {
    let theta = u.norm();
    let uv = u.cross(v);
    let coeff = if theta < 1e-4 {
        // 1/12 + θ²/720 + …
        1.0 / 12.0 + theta * theta / 720.0
    } else {
        let half = 0.5 * theta;
        (1.0 - half / half.tan()) / (theta * theta)
    };
    v - 0.5 * uv + coeff * u.cross(&uv)
}

/// A left-invariant metric on SO(3) given by an SPD matrix, with its inverse cached.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InertiaMetric {
    matrix: Matrix3<f64>,
    inverse: Matrix3<f64>,
}

impl InertiaMetric {
    pub fn new(matrix: Matrix3<f64>) -> Result<Self> {
        if !is_spd(&matrix) {
            return Err(Error::SingularMetric);
        }
        let inverse = matrix.try_inverse().ok_or(Error::SingularMetric)?;
        Ok(Self { matrix, inverse })
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.matrix
    }

    pub fn inverse(&self) -> &Matrix3<f64> {
        &self.inverse
    }

    pub fn flat(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.matrix * v
    }

    pub fn sharp(&self, covector: &Vector3<f64>) -> Vector3<f64> {
        self.inverse * covector
    }

    pub fn inner(&self, a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
        a.dot(&(self.matrix * b))
    }

    pub fn norm(&self, a: &Vector3<f64>) -> f64 {
        self.inner(a, a).max(0.0).sqrt()
    }

    /// Levi-Civita connection on left-invariant fields:
    /// `∇_a b = ½([a, b] − 𝕀⁻¹ ad*_a 𝕀b − 𝕀⁻¹ ad*_b 𝕀a)`.
    pub fn connection(&self, a: &Vector3<f64>, b: &Vector3<f64>) -> Vector3<f64> {
        let ia = self.matrix * a;
        let ib = self.matrix * b;
        0.5 * (a.cross(b) - self.inverse * (adstar(a, &ib) + adstar(b, &ia)))
    }
}

/// Free-function form of [`InertiaMetric::connection`].
pub fn connection_term(
    metric: &Matrix3<f64>,
    a: &Vector3<f64>,
    b: &Vector3<f64>,
) -> Result<Vector3<f64>> {
    Ok(InertiaMetric::new(*metric)?.connection(a, b))
}

pub(crate) fn is_spd(m: &Matrix3<f64>) -> bool {
    if !m.iter().all(|x| x.is_finite()) {
        return false;
    }
    if (m - m.transpose()).abs().max() > 1e-12 * m.abs().max().max(1.0) {
        return false;
    }
    m.symmetric_eigenvalues().min() > 0.0
}
