//! Pinhole camera model: projection, radial/tangential distortion with an
//! iterative inverse, homography estimation from planar views, and the
//! closed-form intrinsics solve.

mod distortion;
mod homography;
mod projection;
mod zhang;

pub use distortion::{apply_distortion, undistort_point, UNDISTORT_MAX_ITER, UNDISTORT_TOL};
pub use homography::{decompose_homography, estimate_homography};
pub use projection::{project_to_pixel, reprojection_errors, world_to_pixel, ReprojectionStats};
pub use zhang::{calibrate_camera, fit_distortion, solve_intrinsics, CameraCalibration};

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Mat3;

pub type Pixel = Vector2<f64>;
/// Point on the normalized (Z = 1) image plane.
pub type NormPoint = Vector2<f64>;
/// Point on the planar target, metres, in the target's Z = 0 plane.
pub type TargetPoint = Vector2<f64>;

#[derive(Debug, Error)]
pub enum CameraError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("point is behind the camera (Z = {z:.6})")]
    BehindCamera { z: f64 },
    #[error("depth {z:.3e} too small to project")]
    DegenerateDepth { z: f64 },
    #[error(
        "undistortion did not converge after {iterations} iterations (residual {residual:.3e})"
    )]
    UndistortDiverged {
        iterations: usize,
        residual: f64,
        last: NormPoint,
    },
    #[error("degenerate view: {0}")]
    DegenerateView(String),
    #[error("need at least {needed} views, got {got}")]
    InsufficientViews { needed: usize, got: usize },
    #[error("degenerate geometry in intrinsics solve: {0}")]
    DegenerateGeometry(String),
}

/// Pinhole intrinsics. `skew` is reported by the closed-form solve but left
/// out of the assembled K unless explicitly requested.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    #[serde(default)]
    pub skew: f64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self, CameraError> {
        if !(fx.is_finite() && fy.is_finite() && cx.is_finite() && cy.is_finite()) {
            return Err(CameraError::InvalidInput(
                "intrinsics must be finite".into(),
            ));
        }
        if fx <= 0.0 || fy <= 0.0 {
            return Err(CameraError::InvalidInput(format!(
                "focal lengths must be positive (fx = {fx}, fy = {fy})"
            )));
        }
        Ok(Self {
            fx,
            fy,
            cx,
            cy,
            skew: 0.0,
        })
    }

    /// Upper-triangular K with zero skew and K[2][2] = 1.
    pub fn k_matrix(&self) -> Mat3 {
        Mat3::new(
            self.fx, 0.0, self.cx, //
            0.0, self.fy, self.cy, //
            0.0, 0.0, 1.0,
        )
    }

    /// K including the reported skew entry.
    pub fn k_matrix_with_skew(&self) -> Mat3 {
        let mut k = self.k_matrix();
        k[(0, 1)] = self.skew;
        k
    }
}

/// Radial (k1, k2) and tangential (p1, p2) distortion on normalized coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DistortionCoeffs {
    pub k1: f64,
    pub k2: f64,
    pub p1: f64,
    pub p2: f64,
}

impl DistortionCoeffs {
    pub fn new(k1: f64, k2: f64, p1: f64, p2: f64) -> Result<Self, CameraError> {
        if ![k1, k2, p1, p2].iter().all(|v| v.is_finite()) {
            return Err(CameraError::InvalidInput(
                "distortion coefficients must be finite".into(),
            ));
        }
        Ok(Self { k1, k2, p1, p2 })
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn is_zero(&self) -> bool {
        self.k1 == 0.0 && self.k2 == 0.0 && self.p1 == 0.0 && self.p2 == 0.0
    }
}

/// One target-point/pixel correspondence of a planar view.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correspondence {
    /// Target-plane coordinates, metres.
    pub target: TargetPoint,
    /// Observed pixel.
    pub pixel: Pixel,
}

/// Correspondences of one observation of the planar target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanarView {
    pub view_id: u64,
    pub points: Vec<Correspondence>,
}

impl PlanarView {
    pub fn new(view_id: u64, points: Vec<Correspondence>) -> Self {
        Self { view_id, points }
    }

    /// Checks the view invariants: >= 4 points, finite pixels, no duplicate
    /// target points.
    pub fn validate(&self) -> Result<(), CameraError> {
        if self.points.len() < 4 {
            return Err(CameraError::DegenerateView(format!(
                "view {} has {} points, need at least 4",
                self.view_id,
                self.points.len()
            )));
        }
        for c in &self.points {
            if !(c.target.x.is_finite()
                && c.target.y.is_finite()
                && c.pixel.x.is_finite()
                && c.pixel.y.is_finite())
            {
                return Err(CameraError::InvalidInput(format!(
                    "view {} contains non-finite coordinates",
                    self.view_id
                )));
            }
        }
        for (i, a) in self.points.iter().enumerate() {
            for b in &self.points[i + 1..] {
                if (a.target - b.target).norm() < 1e-12 {
                    return Err(CameraError::DegenerateView(format!(
                        "view {} has duplicate target points",
                        self.view_id
                    )));
                }
            }
        }
        Ok(())
    }
}

/// The six distinct entries of B = (K⁻¹)ᵀ K⁻¹.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BMatrix {
    pub b11: f64,
    pub b12: f64,
    pub b22: f64,
    pub b13: f64,
    pub b23: f64,
    pub b33: f64,
}

impl BMatrix {
    pub fn from_k(k: &Mat3) -> Self {
        let k_inv = k
            .try_inverse()
            .expect("K is upper triangular with positive diagonal");
        let b = k_inv.transpose() * k_inv;
        Self {
            b11: b[(0, 0)],
            b12: b[(0, 1)],
            b22: b[(1, 1)],
            b13: b[(0, 2)],
            b23: b[(1, 2)],
            b33: b[(2, 2)],
        }
    }

    pub fn matrix(&self) -> Mat3 {
        Mat3::new(
            self.b11, self.b12, self.b13, //
            self.b12, self.b22, self.b23, //
            self.b13, self.b23, self.b33,
        )
    }

    /// Closed-form intrinsics extraction. Fails when the view geometry leaves
    /// a square-root argument or denominator non-positive.
    pub fn to_intrinsics(&self) -> Result<CameraIntrinsics, CameraError> {
        let (b11, b12, b22, b13, b23, b33) =
            (self.b11, self.b12, self.b22, self.b13, self.b23, self.b33);
        if b11 <= 0.0 {
            return Err(CameraError::DegenerateGeometry(format!(
                "B11 = {b11:.3e} must be positive"
            )));
        }
        let denom = b11 * b22 - b12 * b12;
        if denom <= 0.0 {
            return Err(CameraError::DegenerateGeometry(format!(
                "B11 B22 - B12^2 = {denom:.3e} must be positive"
            )));
        }
        let cy = (b12 * b13 - b11 * b23) / denom;
        let lambda = b33 - (b13 * b13 + cy * (b12 * b13 - b11 * b23)) / b11;
        if lambda <= 0.0 {
            return Err(CameraError::DegenerateGeometry(format!(
                "lambda = {lambda:.3e} must be positive"
            )));
        }
        let fx = (lambda / b11).sqrt();
        let fy = (lambda * b11 / denom).sqrt();
        let skew = -b12 * fx * fx * fy / lambda;
        let cx = skew * cy / fy - b13 * fx * fx / lambda;
        let mut intr = CameraIntrinsics::new(fx, fy, cx, cy)?;
        intr.skew = skew;
        Ok(intr)
    }
}
