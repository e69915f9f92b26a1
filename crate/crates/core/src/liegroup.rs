//! SE(3) and so(3) algebra.
//!
//! Poses are stored as a rotation matrix plus a translation vector. Twists use
//! the `[rho; phi]` ordering: translational part first, rotational part second.
//! `exp_map` and `log_map` are the closed-form SE(3) exponential and logarithm,
//! with series expansions near the identity.

use std::f64::consts::PI;
use std::fmt;
use std::ops::Mul;

use nalgebra::{Matrix3, Matrix4, Vector3, Vector6};
use thiserror::Error;

/// Below this rotation angle the closed-form coefficients are replaced by
/// their Taylor series.
pub const SMALL_ANGLE: f64 = 1e-8;

/// `log_map` refuses rotations whose angle is this close to pi.
pub const CUT_LOCUS_GUARD: f64 = 1e-6;

/// Long composition chains re-orthonormalize their rotation after this many steps.
pub const RENORMALIZE_EVERY: usize = 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LieError {
    #[error("rotation angle {angle} is within {CUT_LOCUS_GUARD} of pi; logarithm is ambiguous")]
    CutLocus { angle: f64 },
    #[error("matrix is not an se(3) element (pattern violated by {violation:e})")]
    MalformedAlgebraElement { violation: f64 },
}

/// Rigid-body transform: `x -> rotation * x + translation`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

/// Lie-algebra coordinates of an SE(3) element.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Twist {
    /// Translational part (meters).
    pub rho: Vector3<f64>,
    /// Rotational part (radians).
    pub phi: Vector3<f64>,
}

impl Twist {
    pub fn new(rho: Vector3<f64>, phi: Vector3<f64>) -> Self {
        Self { rho, phi }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    /// Builds a twist from `[rho1, rho2, rho3, phi1, phi2, phi3]`.
    pub fn from_array(v: [f64; 6]) -> Self {
        Self {
            rho: Vector3::new(v[0], v[1], v[2]),
            phi: Vector3::new(v[3], v[4], v[5]),
        }
    }

    pub fn from_vector(v: &Vector6<f64>) -> Self {
        Self::from_array([v[0], v[1], v[2], v[3], v[4], v[5]])
    }

    pub fn to_array(&self) -> [f64; 6] {
        [
            self.rho[0], self.rho[1], self.rho[2], self.phi[0], self.phi[1], self.phi[2],
        ]
    }

    pub fn to_vector(&self) -> Vector6<f64> {
        Vector6::from(self.to_array())
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            rho: self.rho * s,
            phi: self.phi * s,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    pub fn norm(&self) -> f64 {
        self.to_vector().norm()
    }
}

impl fmt::Display for Twist {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let a = self.to_array();
        write!(
            f,
            "[{:.6}, {:.6}, {:.6}, {:.6}, {:.6}, {:.6}]",
            a[0], a[1], a[2], a[3], a[4], a[5]
        )
    }
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    /// Rotation about the z axis by `angle` radians, no translation.
    pub fn rot_z(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self::new(
            Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0),
            Vector3::zeros(),
        )
    }

    /// Homogeneous 4x4 form.
    pub fn to_matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// Reads the top 3x4 block of a homogeneous matrix. The bottom row is ignored.
    pub fn from_matrix(m: &Matrix4<f64>) -> Self {
        Self {
            rotation: m.fixed_view::<3, 3>(0, 0).into_owned(),
            translation: m.fixed_view::<3, 1>(0, 3).into_owned(),
        }
    }

    /// Applies `other` first, then `self`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// Rotation angle in `[0, pi]`.
    pub fn rotation_angle(&self) -> f64 {
        let (_, angle) = rotation_axis_sin_cos(&self.rotation);
        angle
    }

    /// Largest deviation of the rotation block from orthonormality: `‖RᵀR − I‖_F`.
    pub fn orthonormality_error(&self) -> f64 {
        (self.rotation.transpose() * self.rotation - Matrix3::identity()).norm()
    }

    /// Projects the rotation block back onto SO(3) (polar decomposition).
    pub fn renormalized(&self) -> Pose {
        Pose {
            rotation: nearest_rotation(&self.rotation),
            translation: self.translation,
        }
    }

    pub fn exp(xi: &Twist) -> Pose {
        exp_map(xi)
    }

    pub fn log(&self) -> Result<Twist, LieError> {
        log_map(self)
    }
}

impl Mul for Pose {
    type Output = Pose;

    fn mul(self, rhs: Pose) -> Pose {
        self.compose(&rhs)
    }
}

impl<'a> Mul<&'a Pose> for &'a Pose {
    type Output = Pose;

    fn mul(self, rhs: &'a Pose) -> Pose {
        self.compose(rhs)
    }
}

/// Composition `a * b` (apply `b`, then `a`).
pub fn compose(a: &Pose, b: &Pose) -> Pose {
    a.compose(b)
}

pub fn inverse(t: &Pose) -> Pose {
    t.inverse()
}

/// 3x3 skew-symmetric matrix such that `skew(u) * v = u × v`.
pub fn skew(u: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -u[2], u[1], u[2], 0.0, -u[0], -u[1], u[0], 0.0)
}

/// Maps a twist to its 4x4 se(3) matrix.
pub fn hat(xi: &Twist) -> Matrix4<f64> {
    let mut m = Matrix4::zeros();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&skew(&xi.phi));
    m.fixed_view_mut::<3, 1>(0, 3).copy_from(&xi.rho);
    m
}

/// Inverse of [`hat`]. Rejects matrices that are not skew in the rotation
/// block or have a non-zero bottom row.
pub fn vee(m: &Matrix4<f64>) -> Result<Twist, LieError> {
    let mut violation: f64 = 0.0;
    for j in 0..4 {
        violation = violation.max(m[(3, j)].abs());
    }
    for i in 0..3 {
        violation = violation.max(m[(i, i)].abs());
        for j in (i + 1)..3 {
            violation = violation.max((m[(i, j)] + m[(j, i)]).abs());
        }
    }
    if violation > 1e-12 {
        return Err(LieError::MalformedAlgebraElement { violation });
    }
    Ok(Twist {
        rho: Vector3::new(m[(0, 3)], m[(1, 3)], m[(2, 3)]),
        phi: Vector3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)]),
    })
}

/// Rodrigues rotation for `phi`.
pub fn so3_exp(phi: &Vector3<f64>) -> Matrix3<f64> {
    let (a, b, _) = exp_coefficients(phi.norm());
    let w = skew(phi);
    Matrix3::identity() + w * a + w * w * b
}

/// Left Jacobian of SO(3); maps `rho` to the translation of `exp_map`.
pub fn so3_left_jacobian(phi: &Vector3<f64>) -> Matrix3<f64> {
    let (_, b, c) = exp_coefficients(phi.norm());
    let w = skew(phi);
    Matrix3::identity() + w * b + w * w * c
}

/// `(sin θ/θ, (1 − cos θ)/θ², (θ − sin θ)/θ³)`. The first two use a 4th-order
/// series below [`SMALL_ANGLE`]; the third cancels badly for small θ and switches
/// to its series below 1e-2.
fn exp_coefficients(theta: f64) -> (f64, f64, f64) {
    let t2 = theta * theta;
    let (a, b) = if theta < SMALL_ANGLE {
        (1.0 - t2 / 6.0 + t2 * t2 / 120.0, 0.5 - t2 / 24.0 + t2 * t2 / 720.0)
    } else {
        let h = (0.5 * theta).sin() / theta;
        (theta.sin() / theta, 2.0 * h * h)
    };
    let c = if theta < 1e-2 {
        1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0
    } else {
        (theta - theta.sin()) / (t2 * theta)
    };
    (a, b, c)
}

/// SE(3) exponential.
pub fn exp_map(xi: &Twist) -> Pose {
    Pose {
        rotation: so3_exp(&xi.phi),
        translation: so3_left_jacobian(&xi.phi) * xi.rho,
    }
}

/// Returns the unit-free rotation vector direction scaled by sin θ, and θ.
fn rotation_axis_sin_cos(r: &Matrix3<f64>) -> (Vector3<f64>, f64) {
    // 2 sin θ · axis
    let v = Vector3::new(r[(2, 1)] - r[(1, 2)], r[(0, 2)] - r[(2, 0)], r[(1, 0)] - r[(0, 1)]);
    let sin_theta = 0.5 * v.norm();
    let cos_theta = 0.5 * (r.trace() - 1.0);
    (v * 0.5, sin_theta.atan2(cos_theta))
}

/// SO(3) logarithm. Valid for angles below `pi - CUT_LOCUS_GUARD`.
pub fn so3_log(r: &Matrix3<f64>) -> Result<Vector3<f64>, LieError> {
    let (half_v, theta) = rotation_axis_sin_cos(r);
    if PI - theta < CUT_LOCUS_GUARD {
        return Err(LieError::CutLocus { angle: theta });
    }
    if theta < 1e-4 {
        // θ/sin θ = 1 + θ²/6 + 7θ⁴/360
        let t2 = theta * theta;
        return Ok(half_v * (1.0 + t2 / 6.0 + 7.0 * t2 * t2 / 360.0));
    }
    if theta < 2.5 {
        return Ok(half_v * (theta / theta.sin()));
    }
    // Near pi the antisymmetric part is small; take the axis from the symmetric part.
    let c = theta.cos();
    let s = (r + r.transpose()) * 0.5 - Matrix3::identity() * c;
    let mut best = 0;
    for i in 1..3 {
        if s[(i, i)] > s[(best, best)] {
            best = i;
        }
    }
    let mut axis: Vector3<f64> = s.column(best).into_owned();
    axis /= axis.norm();
    if axis.dot(&half_v) < 0.0 {
        axis = -axis;
    }
    Ok(axis * theta)
}

/// Inverse of [`so3_left_jacobian`].
pub fn so3_left_jacobian_inverse(phi: &Vector3<f64>) -> Matrix3<f64> {
    let theta = phi.norm();
    let w = skew(phi);
    let coeff = if theta < 1e-2 {
        let t2 = theta * theta;
        1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0
    } else {
        // 1 − cos θ = 2 sin²(θ/2) avoids cancellation.
        let half = (0.5 * theta).sin();
        (1.0 - theta * theta.sin() / (4.0 * half * half)) / (theta * theta)
    };
    Matrix3::identity() - w * 0.5 + w * w * coeff
}

/// SE(3) logarithm.
pub fn log_map(t: &Pose) -> Result<Twist, LieError> {
    let phi = so3_log(&t.rotation)?;
    let rho = so3_left_jacobian_inverse(&phi) * t.translation;
    Ok(Twist { rho, phi })
}

/// Closest rotation matrix in the Frobenius sense.
pub fn nearest_rotation(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let u = svd.u.expect("svd u");
    let v_t = svd.v_t.expect("svd v_t");
    let mut r = u * v_t;
    if r.determinant() < 0.0 {
        let mut d = Matrix3::identity();
        d[(2, 2)] = -1.0;
        r = u * d * v_t;
    }
    r
}

/// Accumulates poses by repeated right-multiplication, re-orthonormalizing
/// every [`RENORMALIZE_EVERY`] steps.
#[derive(Clone, Debug)]
pub struct PoseChain {
    current: Pose,
    steps: usize,
}

impl PoseChain {
    pub fn new(start: Pose) -> Self {
        Self {
            current: start,
            steps: 0,
        }
    }

    pub fn current(&self) -> &Pose {
        &self.current
    }

    /// `current <- current * step`
    pub fn push_right(&mut self, step: &Pose) -> Pose {
        self.current = self.current.compose(step);
        self.bump();
        self.current
    }

    /// `current <- step * current`
    pub fn push_left(&mut self, step: &Pose) -> Pose {
        self.current = step.compose(&self.current);
        self.bump();
        self.current
    }

    fn bump(&mut self) {
        self.steps += 1;
        if self.steps.is_multiple_of(RENORMALIZE_EVERY) {
            self.current = self.current.renormalized();
        }
    }
}
