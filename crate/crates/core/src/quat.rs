//! Quaternion algebra: Hamilton products, the 4x4 left/right multiplication
//! matrices, rotation of 3-vectors and conversions to/from rotation matrices.
//!
//! Storage order is `(w, x, y, z)` with the scalar part first. File formats
//! that use `(x, y, z, w)` are converted at the I/O boundary only.

use nalgebra::{Matrix3, Matrix4, Vector3, Vector4};
use std::ops::{Add, Mul, Neg, Sub};
use thiserror::Error;

use crate::linalg::sym_eigen4;

/// Tolerance under which the scalar part classifies a quaternion as a vector
/// quaternion.
pub const VECTOR_PART_TOL: f64 = 1e-12;

/// Norms below this cannot be normalized meaningfully.
pub const DEGENERATE_NORM: f64 = 1e-15;

#[derive(Debug, Error, PartialEq)]
pub enum QuatError {
    #[error("cannot normalize quaternion with norm {norm:.3e} (< {min:.1e})")]
    DegenerateNorm { norm: f64, min: f64 },
    #[error("matrix contains non-finite entries")]
    NonFiniteMatrix,
}

/// A quaternion `w + x i + y j + z k`, not necessarily of unit norm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quaternion {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Quaternion {
    pub const fn new(w: f64, x: f64, y: f64, z: f64) -> Self {
        Self { w, x, y, z }
    }

    pub const fn identity() -> Self {
        Self::new(1.0, 0.0, 0.0, 0.0)
    }

    /// The vector quaternion `[0, v]`.
    pub fn from_vector(v: &Vector3<f64>) -> Self {
        Self::new(0.0, v.x, v.y, v.z)
    }

    pub fn from_vec4(v: &Vector4<f64>) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }

    pub fn as_vec4(&self) -> Vector4<f64> {
        Vector4::new(self.w, self.x, self.y, self.z)
    }

    /// The imaginary part as a 3-vector.
    pub fn vector_part(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn conjugate(&self) -> Self {
        Self::new(self.w, -self.x, -self.y, -self.z)
    }

    pub fn norm_squared(&self) -> f64 {
        self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z
    }

    pub fn norm(&self) -> f64 {
        self.norm_squared().sqrt()
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.w * other.w + self.x * other.x + self.y * other.y + self.z * other.z
    }

    /// True when the scalar part vanishes (within [`VECTOR_PART_TOL`]).
    pub fn is_vector(&self) -> bool {
        self.w.abs() <= VECTOR_PART_TOL
    }

    pub fn is_finite(&self) -> bool {
        self.w.is_finite() && self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Projection onto the unit sphere, `x / ||x||`.
    pub fn normalized(&self) -> Result<UnitQuaternion, QuatError> {
        let norm = self.norm();
        if norm <= DEGENERATE_NORM {
            return Err(QuatError::DegenerateNorm {
                norm,
                min: DEGENERATE_NORM,
            });
        }
        let inv = 1.0 / norm;
        Ok(UnitQuaternion(Quaternion::new(
            self.w * inv,
            self.x * inv,
            self.y * inv,
            self.z * inv,
        )))
    }

    /// Left multiplication matrix `M(a)` with `a b = M(a) b`.
    #[rustfmt::skip]
    pub fn left_mul_matrix(&self) -> Matrix4<f64> {
        let (a0, a1, a2, a3) = (self.w, self.x, self.y, self.z);
        Matrix4::new(
            a0, -a1, -a2, -a3,
            a1,  a0, -a3,  a2,
            a2,  a3,  a0, -a1,
            a3, -a2,  a1,  a0,
        )
    }

    /// Right multiplication matrix `W(a)` with `b a = W(a) b`.
    #[rustfmt::skip]
    pub fn right_mul_matrix(&self) -> Matrix4<f64> {
        let (a0, a1, a2, a3) = (self.w, self.x, self.y, self.z);
        Matrix4::new(
            a0, -a1, -a2, -a3,
            a1,  a0,  a3, -a2,
            a2, -a3,  a0,  a1,
            a3,  a2, -a1,  a0,
        )
    }
}

/// Conjugation as a matrix: `conj(q) = D q` with `D = diag(1, -1, -1, -1)`.
pub fn conjugation_matrix() -> Matrix4<f64> {
    Matrix4::from_diagonal(&Vector4::new(1.0, -1.0, -1.0, -1.0))
}

impl Mul for Quaternion {
    type Output = Quaternion;

    /// Hamilton product `[p0 q0 - p.q, p0 q + q0 p + p x q]`.
    fn mul(self, rhs: Quaternion) -> Quaternion {
        Quaternion::new(
            self.w * rhs.w - self.x * rhs.x - self.y * rhs.y - self.z * rhs.z,
            self.w * rhs.x + rhs.w * self.x + self.y * rhs.z - self.z * rhs.y,
            self.w * rhs.y + rhs.w * self.y + self.z * rhs.x - self.x * rhs.z,
            self.w * rhs.z + rhs.w * self.z + self.x * rhs.y - self.y * rhs.x,
        )
    }
}

impl Add for Quaternion {
    type Output = Quaternion;
    fn add(self, rhs: Quaternion) -> Quaternion {
        Quaternion::new(self.w + rhs.w, self.x + rhs.x, self.y + rhs.y, self.z + rhs.z)
    }
}

impl Sub for Quaternion {
    type Output = Quaternion;
    fn sub(self, rhs: Quaternion) -> Quaternion {
        Quaternion::new(self.w - rhs.w, self.x - rhs.x, self.y - rhs.y, self.z - rhs.z)
    }
}

impl Neg for Quaternion {
    type Output = Quaternion;
    fn neg(self) -> Quaternion {
        Quaternion::new(-self.w, -self.x, -self.y, -self.z)
    }
}

/// A quaternion of unit norm, normalized at construction.
///
/// No sign canonicalization is applied here; solver iterates live on the full
/// sphere. [`UnitQuaternion::from_rotation_matrix`] and metric comparisons
/// pick the `w >= 0` representative explicitly where they need one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitQuaternion(Quaternion);

impl UnitQuaternion {
    pub fn identity() -> Self {
        UnitQuaternion(Quaternion::identity())
    }

    /// Normalizes the given components.
    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Result<Self, QuatError> {
        Quaternion::new(w, x, y, z).normalized()
    }

    /// Unit quaternion for a rotation of `angle` radians about `axis`.
    pub fn from_axis_angle(axis: &Vector3<f64>, angle: f64) -> Result<Self, QuatError> {
        let n = axis.norm();
        if n <= DEGENERATE_NORM {
            return Err(QuatError::DegenerateNorm {
                norm: n,
                min: DEGENERATE_NORM,
            });
        }
        let (s, c) = (0.5 * angle).sin_cos();
        let u = axis / n;
        Ok(UnitQuaternion(Quaternion::new(c, s * u.x, s * u.y, s * u.z)))
    }

    pub fn as_quat(&self) -> Quaternion {
        self.0
    }

    pub fn as_vec4(&self) -> Vector4<f64> {
        self.0.as_vec4()
    }

    pub fn w(&self) -> f64 {
        self.0.w
    }

    pub fn conjugate(&self) -> Self {
        UnitQuaternion(self.0.conjugate())
    }

    /// Flips the sign of all components; represents the same rotation.
    pub fn antipode(&self) -> Self {
        UnitQuaternion(-self.0)
    }

    /// Rotates a 3-vector: the imaginary part of `q [0, t] q*`.
    pub fn rotate(&self, t: &Vector3<f64>) -> Vector3<f64> {
        let q = self.0;
        let r = q * Quaternion::from_vector(t) * q.conjugate();
        r.vector_part()
    }

    /// The rotation matrix `q q^T + q0^2 I + 2 q0 q^ + (q^)^2`.
    #[rustfmt::skip]
    pub fn to_rotation_matrix(&self) -> Matrix3<f64> {
        let (w, x, y, z) = (self.0.w, self.0.x, self.0.y, self.0.z);
        Matrix3::new(
            w * w + x * x - y * y - z * z, 2.0 * (x * y - w * z),         2.0 * (x * z + w * y),
            2.0 * (x * y + w * z),         w * w - x * x + y * y - z * z, 2.0 * (y * z - w * x),
            2.0 * (x * z - w * y),         2.0 * (y * z + w * x),         w * w - x * x - y * y + z * z,
        )
    }

    /// The unit quaternion (sign-canonicalized to `w >= 0`) whose rotation is
    /// nearest to `r` in the Frobenius sense.
    ///
    /// Computed as the dominant eigenvector of the symmetric 4x4 Davenport
    /// matrix, which also serves as the nearest-rotation projection when `r`
    /// is not exactly orthogonal (chordal initialization relies on this).
    pub fn from_rotation_matrix(r: &Matrix3<f64>) -> Result<Self, QuatError> {
        if !r.iter().all(|v| v.is_finite()) {
            return Err(QuatError::NonFiniteMatrix);
        }
        let k = davenport_matrix(r);
        let (values, vectors) = sym_eigen4(&k);
        // Largest eigenvalue of the Davenport matrix.
        let mut best = 0;
        for i in 1..4 {
            if values[i] > values[best] {
                best = i;
            }
        }
        let v = vectors.column(best);
        let q = Quaternion::new(v[0], v[1], v[2], v[3]).normalized()?;
        Ok(if q.w() < 0.0 { q.antipode() } else { q })
    }
}

impl Mul for UnitQuaternion {
    type Output = UnitQuaternion;

    /// Product of unit quaternions, renormalized to absorb rounding drift.
    fn mul(self, rhs: UnitQuaternion) -> UnitQuaternion {
        (self.0 * rhs.0)
            .normalized()
            .expect("product of unit quaternions has unit norm")
    }
}

/// Symmetric 4x4 matrix whose dominant eigenvector is the quaternion of the
/// rotation nearest to `a`.
#[rustfmt::skip]
fn davenport_matrix(a: &Matrix3<f64>) -> Matrix4<f64> {
    let t = a.trace();
    Matrix4::new(
        t,                   a[(2, 1)] - a[(1, 2)],  a[(0, 2)] - a[(2, 0)],  a[(1, 0)] - a[(0, 1)],
        a[(2, 1)] - a[(1, 2)], a[(0, 0)] - a[(1, 1)] - a[(2, 2)], a[(0, 1)] + a[(1, 0)], a[(0, 2)] + a[(2, 0)],
        a[(0, 2)] - a[(2, 0)], a[(0, 1)] + a[(1, 0)], a[(1, 1)] - a[(0, 0)] - a[(2, 2)], a[(1, 2)] + a[(2, 1)],
        a[(1, 0)] - a[(0, 1)], a[(0, 2)] + a[(2, 0)], a[(1, 2)] + a[(2, 1)], a[(2, 2)] - a[(0, 0)] - a[(1, 1)],
    )
}

/// Projects `v` onto the tangent space of the unit sphere at `x`:
/// `(I - x x^T) v`. Requires unit `x`.
pub fn sphere_tangent_project(x: &Vector4<f64>, v: &Vector4<f64>) -> Vector4<f64> {
    v - x * x.dot(v)
}
