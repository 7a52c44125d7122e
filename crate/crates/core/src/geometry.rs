//! Rotation algebra shared by the whole toolkit: unit quaternions (Hamilton
//! convention, scalar-first), rotation matrices, the skew and Ω operators and
//! the rotation angle residual used by the extrinsic solver.

use nalgebra::{Matrix3, Matrix4, Vector3, Vector4};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;
pub type Mat4 = Matrix4<f64>;

/// Orthonormality tolerance accepted when ingesting an external rotation matrix.
pub const ROTATION_INGEST_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("matrix is not a rotation: orthonormality defect {defect:.3e} exceeds {tol:.1e}")]
    InvalidRotation { defect: f64, tol: f64 },
}

/// Unit quaternion, Hamilton convention, scalar-first component order (w, x, y, z).
///
/// Canonical sign is w >= 0; when w == 0 the first nonzero of (x, y, z) is
/// made non-negative, so equal rotations compare equal after canonicalization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitQuaternion {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl UnitQuaternion {
    /// Build from components, normalizing. Rejects non-finite input and
    /// near-zero norm.
    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Result<Self, GeometryError> {
        if !(w.is_finite() && x.is_finite() && y.is_finite() && z.is_finite()) {
            return Err(GeometryError::InvalidInput(
                "quaternion components must be finite".into(),
            ));
        }
        let norm = (w * w + x * x + y * y + z * z).sqrt();
        if norm < 1e-12 {
            return Err(GeometryError::InvalidInput(
                "quaternion norm too small to normalize".into(),
            ));
        }
        Ok(Self {
            w: w / norm,
            x: x / norm,
            y: y / norm,
            z: z / norm,
        })
    }

    pub fn identity() -> Self {
        Self {
            w: 1.0,
            x: 0.0,
            y: 0.0,
            z: 0.0,
        }
    }

    /// Rotation of `angle` radians about `axis` (need not be unit length).
    pub fn from_axis_angle(axis: &Vec3, angle: f64) -> Result<Self, GeometryError> {
        let n = axis.norm();
        if !n.is_finite() || n < 1e-15 {
            return Err(GeometryError::InvalidInput(
                "axis must be finite and nonzero".into(),
            ));
        }
        let half = 0.5 * angle;
        let s = half.sin() / n;
        Self::new(half.cos(), axis.x * s, axis.y * s, axis.z * s)
    }

    /// Exponential map: rotation vector (axis * angle) to quaternion.
    /// Uses a series expansion near zero so small rates integrate stably.
    pub fn from_rotation_vector(rv: &Vec3) -> Self {
        let angle = rv.norm();
        let half = 0.5 * angle;
        // sin(a/2)/a with the removable singularity expanded at a -> 0
        let k = if angle < 1e-8 {
            0.5 - angle * angle / 48.0
        } else {
            half.sin() / angle
        };
        Self {
            w: half.cos(),
            x: rv.x * k,
            y: rv.y * k,
            z: rv.z * k,
        }
        .renormalized()
    }

    /// Inverse rotation (conjugate for unit quaternions).
    pub fn conjugate(&self) -> Self {
        Self {
            w: self.w,
            x: -self.x,
            y: -self.y,
            z: -self.z,
        }
    }

    pub fn norm(&self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn renormalized(&self) -> Self {
        let n = self.norm();
        Self {
            w: self.w / n,
            x: self.x / n,
            y: self.y / n,
            z: self.z / n,
        }
    }

    /// Fix the sign ambiguity of the double cover: w >= 0, ties broken on the
    /// first nonzero vector component.
    pub fn canonicalized(&self) -> Self {
        let flip = if self.w != 0.0 {
            self.w < 0.0
        } else if self.x != 0.0 {
            self.x < 0.0
        } else if self.y != 0.0 {
            self.y < 0.0
        } else {
            self.z < 0.0
        };
        if flip {
            Self {
                w: -self.w,
                x: -self.x,
                y: -self.y,
                z: -self.z,
            }
        } else {
            *self
        }
    }

    /// Rotation angle in [0, pi].
    pub fn angle(&self) -> f64 {
        let v = (self.x * self.x + self.y * self.y + self.z * self.z).sqrt();
        2.0 * v.atan2(self.w.abs())
    }

    /// Rotate a vector: q v q*.
    pub fn rotate(&self, v: &Vec3) -> Vec3 {
        // t = 2 (im(q) x v); v' = v + w t + im(q) x t
        let im = Vec3::new(self.x, self.y, self.z);
        let t = 2.0 * im.cross(v);
        v + self.w * t + im.cross(&t)
    }

    /// Rotate by the inverse: q* v q.
    pub fn rotate_inverse(&self, v: &Vec3) -> Vec3 {
        self.conjugate().rotate(v)
    }

    /// Components as a 4-vector in (w, x, y, z) order.
    pub fn as_vector(&self) -> Vector4<f64> {
        Vector4::new(self.w, self.x, self.y, self.z)
    }

    pub fn from_vector(v: &Vector4<f64>) -> Result<Self, GeometryError> {
        Self::new(v[0], v[1], v[2], v[3])
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.w * other.w + self.x * other.x + self.y * other.y + self.z * other.z
    }

    /// Angle between the rotations encoded by `self` and `other`.
    pub fn angle_to(&self, other: &Self) -> f64 {
        (self.conjugate() * *other).angle()
    }

    pub fn to_rotation(&self) -> RotationMatrix {
        quat_to_rot(self)
    }
}

impl std::ops::Mul for UnitQuaternion {
    type Output = UnitQuaternion;

    /// Hamilton product a ⊗ b, renormalized. Composition order matches the
    /// rotation matrix product R(a) R(b).
    fn mul(self, rhs: UnitQuaternion) -> UnitQuaternion {
        quat_mul(&self, &rhs)
    }
}

/// Hamilton product a ⊗ b, renormalized.
pub fn quat_mul(a: &UnitQuaternion, b: &UnitQuaternion) -> UnitQuaternion {
    UnitQuaternion {
        w: a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
        x: a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
        y: a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
        z: a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
    }
    .renormalized()
}

/// Left multiplication matrix: [a]_L b = a ⊗ b on (w, x, y, z) 4-vectors.
pub fn quat_left_matrix(q: &UnitQuaternion) -> Mat4 {
    Mat4::new(
        q.w, -q.x, -q.y, -q.z, //
        q.x, q.w, -q.z, q.y, //
        q.y, q.z, q.w, -q.x, //
        q.z, -q.y, q.x, q.w,
    )
}

/// Right multiplication matrix: [b]_R a = a ⊗ b on (w, x, y, z) 4-vectors.
pub fn quat_right_matrix(q: &UnitQuaternion) -> Mat4 {
    Mat4::new(
        q.w, -q.x, -q.y, -q.z, //
        q.x, q.w, q.z, -q.y, //
        q.y, -q.z, q.w, q.x, //
        q.z, q.y, -q.x, q.w,
    )
}

/// Antisymmetric cross-product matrix: skew(w) v = w × v.
pub fn skew(w: &Vec3) -> Mat3 {
    Mat3::new(
        0.0, -w.z, w.y, //
        w.z, 0.0, -w.x, //
        -w.y, w.x, 0.0,
    )
}

/// Ω(ω) driving the quaternion rate: q̇ = ½ Ω(ω) q with q laid out
/// scalar-last (x, y, z, w). Block structure: upper-left −[ω]^, upper-right
/// column ω, lower-left row −ωᵀ, lower-right 0.
pub fn omega_matrix(w: &Vec3) -> Mat4 {
    let s = skew(w);
    let mut m = Mat4::zeros();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&(-s));
    m.fixed_view_mut::<3, 1>(0, 3).copy_from(w);
    m.fixed_view_mut::<1, 3>(3, 0).copy_from(&(-w.transpose()));
    m
}

/// 3x3 rotation matrix, kept orthonormal by construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RotationMatrix(Mat3);

impl RotationMatrix {
    pub fn identity() -> Self {
        Self(Mat3::identity())
    }

    /// Validate and wrap an arbitrary matrix. Accepts orthonormality defect up
    /// to `ROTATION_INGEST_TOL` and renormalizes via SVD projection.
    pub fn from_matrix(m: &Mat3) -> Result<Self, GeometryError> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(GeometryError::InvalidInput(
                "rotation matrix entries must be finite".into(),
            ));
        }
        let defect = orthonormality_defect(m);
        if defect > ROTATION_INGEST_TOL || (m.determinant() - 1.0).abs() > ROTATION_INGEST_TOL {
            return Err(GeometryError::InvalidRotation {
                defect,
                tol: ROTATION_INGEST_TOL,
            });
        }
        Ok(Self::project_to_so3(m))
    }

    /// Nearest rotation in Frobenius norm (SVD projection with det +1).
    pub fn project_to_so3(m: &Mat3) -> Self {
        let svd = m.svd(true, true);
        let u = svd.u.expect("svd U");
        let v_t = svd.v_t.expect("svd Vt");
        let mut r = u * v_t;
        if r.determinant() < 0.0 {
            // flip the weakest direction to land on SO(3), not O(3)
            let mut u = u;
            u.column_mut(2).neg_mut();
            r = u * v_t;
        }
        Self(r)
    }

    pub fn rot_x(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self(Mat3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c))
    }

    pub fn rot_y(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self(Mat3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c))
    }

    pub fn rot_z(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self(Mat3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0))
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    pub fn apply(&self, v: &Vec3) -> Vec3 {
        self.0 * v
    }

    /// Max-norm of RᵀR − I.
    pub fn orthonormality_defect(&self) -> f64 {
        orthonormality_defect(&self.0)
    }

    pub fn to_quaternion(&self) -> UnitQuaternion {
        rot_to_quat_unchecked(&self.0)
    }
}

impl std::ops::Mul for RotationMatrix {
    type Output = RotationMatrix;

    fn mul(self, rhs: RotationMatrix) -> RotationMatrix {
        RotationMatrix(self.0 * rhs.0)
    }
}

fn orthonormality_defect(m: &Mat3) -> f64 {
    let g = m.transpose() * m - Mat3::identity();
    g.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// Quaternion to rotation matrix (body-to-reference sense of the quaternion).
pub fn quat_to_rot(q: &UnitQuaternion) -> RotationMatrix {
    let (w, x, y, z) = (q.w, q.x, q.y, q.z);
    RotationMatrix(Mat3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    ))
}

/// Rotation matrix to canonicalized quaternion. Validates orthonormality at
/// the ingest tolerance before extraction.
pub fn rot_to_quat(m: &Mat3) -> Result<UnitQuaternion, GeometryError> {
    let r = RotationMatrix::from_matrix(m)?;
    Ok(r.to_quaternion())
}

/// Largest-diagonal-pivot extraction (branch-stable near 180° rotations).
fn rot_to_quat_unchecked(m: &Mat3) -> UnitQuaternion {
    let trace = m[(0, 0)] + m[(1, 1)] + m[(2, 2)];
    let q = if trace > m[(0, 0)] && trace > m[(1, 1)] && trace > m[(2, 2)] {
        let s = (trace + 1.0).sqrt() * 2.0;
        UnitQuaternion {
            w: 0.25 * s,
            x: (m[(2, 1)] - m[(1, 2)]) / s,
            y: (m[(0, 2)] - m[(2, 0)]) / s,
            z: (m[(1, 0)] - m[(0, 1)]) / s,
        }
    } else if m[(0, 0)] > m[(1, 1)] && m[(0, 0)] > m[(2, 2)] {
        let s = (1.0 + m[(0, 0)] - m[(1, 1)] - m[(2, 2)]).sqrt() * 2.0;
        UnitQuaternion {
            w: (m[(2, 1)] - m[(1, 2)]) / s,
            x: 0.25 * s,
            y: (m[(0, 1)] + m[(1, 0)]) / s,
            z: (m[(0, 2)] + m[(2, 0)]) / s,
        }
    } else if m[(1, 1)] > m[(2, 2)] {
        let s = (1.0 + m[(1, 1)] - m[(0, 0)] - m[(2, 2)]).sqrt() * 2.0;
        UnitQuaternion {
            w: (m[(0, 2)] - m[(2, 0)]) / s,
            x: (m[(0, 1)] + m[(1, 0)]) / s,
            y: 0.25 * s,
            z: (m[(1, 2)] + m[(2, 1)]) / s,
        }
    } else {
        let s = (1.0 + m[(2, 2)] - m[(0, 0)] - m[(1, 1)]).sqrt() * 2.0;
        UnitQuaternion {
            w: (m[(1, 0)] - m[(0, 1)]) / s,
            x: (m[(0, 2)] + m[(2, 0)]) / s,
            y: (m[(1, 2)] + m[(2, 1)]) / s,
            z: 0.25 * s,
        }
    };
    q.renormalized().canonicalized()
}

/// Angle residual r = arccos((tr(R_est⁻¹ R_imu⁻¹ R_est R_cam) − 1) / 2),
/// result in [0, pi].
///
/// Evaluated as atan2(sin, cos) with sin recovered from the antisymmetric
/// part: arccos of a clamped trace loses ~sqrt(eps) accuracy near zero
/// residual, which would swamp the consistency checks on exact triples.
pub fn rotation_angle_residual(
    r_est: &RotationMatrix,
    r_imu: &RotationMatrix,
    r_cam: &RotationMatrix,
) -> f64 {
    let m =
        r_est.matrix().transpose() * r_imu.matrix().transpose() * r_est.matrix() * r_cam.matrix();
    let cos = (0.5 * (m[(0, 0)] + m[(1, 1)] + m[(2, 2)] - 1.0)).clamp(-1.0, 1.0);
    let sin = 0.5
        * Vec3::new(
            m[(2, 1)] - m[(1, 2)],
            m[(0, 2)] - m[(2, 0)],
            m[(1, 0)] - m[(0, 1)],
        )
        .norm();
    sin.atan2(cos)
}
