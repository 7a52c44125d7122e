//! Closed-form intrinsics from planar views: two constraints per view on
//! B = (K⁻¹)ᵀK⁻¹ (orthogonality and equal norm of the first two
//! homography-transformed columns), solved as an SVD null-space problem,
//! followed by a linear least-squares distortion fit on the residuals.

use nalgebra::{DMatrix, DVector, Vector6};

use super::{
    decompose_homography, estimate_homography, reprojection_errors, BMatrix, CameraError,
    CameraIntrinsics, DistortionCoeffs, PlanarView, ReprojectionStats,
};
use crate::geometry::{Mat3, RotationMatrix, Vec3};

/// v_ij stacking vector for columns i, j of H (0-based).
fn v_ij(h: &Mat3, i: usize, j: usize) -> Vector6<f64> {
    let hi = h.column(i);
    let hj = h.column(j);
    Vector6::new(
        hi[0] * hj[0],
        hi[0] * hj[1] + hi[1] * hj[0],
        hi[1] * hj[1],
        hi[2] * hj[0] + hi[0] * hj[2],
        hi[2] * hj[1] + hi[1] * hj[2],
        hi[2] * hj[2],
    )
}

/// Closed-form intrinsics from at least 3 views with distinct orientations.
///
/// Returns the intrinsics (with the skew entry reported separately) and the
/// B matrix the extraction came from.
pub fn solve_intrinsics(views: &[PlanarView]) -> Result<(CameraIntrinsics, BMatrix), CameraError> {
    if views.len() < 3 {
        return Err(CameraError::InsufficientViews {
            needed: 3,
            got: views.len(),
        });
    }

    let mut a = DMatrix::<f64>::zeros(2 * views.len(), 6);
    for (k, view) in views.iter().enumerate() {
        let mut h = estimate_homography(view)?;
        // per-view scale does not change the null space; normalizing keeps
        // the stacked rows comparably sized
        h /= h.norm();
        let v12 = v_ij(&h, 0, 1);
        let v11 = v_ij(&h, 0, 0);
        let v22 = v_ij(&h, 1, 1);
        a.row_mut(2 * k).copy_from(&v12.transpose());
        a.row_mut(2 * k + 1).copy_from(&(v11 - v22).transpose());
    }

    let svd = a.svd(false, true);
    let v_t = svd.v_t.as_ref().expect("svd Vt");
    let sv = &svd.singular_values;
    let mut min_idx = 0;
    for i in 1..sv.len() {
        if sv[i] < sv[min_idx] {
            min_idx = i;
        }
    }
    let b_vec = v_t.row(min_idx);
    // the null vector's sign is arbitrary; B11 > 0 for a valid solution
    let sign = if b_vec[0] < 0.0 { -1.0 } else { 1.0 };
    let b = BMatrix {
        b11: sign * b_vec[0],
        b12: sign * b_vec[1],
        b22: sign * b_vec[2],
        b13: sign * b_vec[3],
        b23: sign * b_vec[4],
        b33: sign * b_vec[5],
    };
    let intr = b.to_intrinsics()?;
    Ok((intr, b))
}

/// Linear least-squares fit of (k1, k2, p1, p2) given intrinsics and one pose
/// per view: the distortion model is linear in the coefficients once the
/// ideal normalized points are known.
pub fn fit_distortion(
    views: &[PlanarView],
    intr: &CameraIntrinsics,
    poses: &[(RotationMatrix, Vec3)],
) -> Result<DistortionCoeffs, CameraError> {
    if views.len() != poses.len() {
        return Err(CameraError::InvalidInput(format!(
            "{} views but {} poses",
            views.len(),
            poses.len()
        )));
    }
    let total: usize = views.iter().map(|v| v.points.len()).sum();
    if total < 2 {
        return Err(CameraError::InvalidInput(
            "need at least 2 correspondences for the distortion fit".into(),
        ));
    }

    let mut a = DMatrix::<f64>::zeros(2 * total, 4);
    let mut rhs = DVector::<f64>::zeros(2 * total);
    let mut row = 0;
    for (view, (rot, t)) in views.iter().zip(poses) {
        for c in &view.points {
            let p_c = rot.apply(&Vec3::new(c.target.x, c.target.y, 0.0)) + t;
            if p_c.z <= 0.0 {
                return Err(CameraError::BehindCamera { z: p_c.z });
            }
            let x = p_c.x / p_c.z;
            let y = p_c.y / p_c.z;
            let r2 = x * x + y * y;
            let xd = (c.pixel.x - intr.cx) / intr.fx;
            let yd = (c.pixel.y - intr.cy) / intr.fy;

            a.row_mut(row)
                .copy_from_slice(&[x * r2, x * r2 * r2, 2.0 * x * y, r2 + 2.0 * x * x]);
            rhs[row] = xd - x;
            row += 1;

            a.row_mut(row)
                .copy_from_slice(&[y * r2, y * r2 * r2, r2 + 2.0 * y * y, 2.0 * x * y]);
            rhs[row] = yd - y;
            row += 1;
        }
    }

    let svd = a.svd(true, true);
    let sol = svd
        .solve(&rhs, 1e-14)
        .map_err(|e| CameraError::DegenerateGeometry(e.to_string()))?;
    DistortionCoeffs::new(sol[0], sol[1], sol[2], sol[3])
}

/// Full single-pass camera calibration: homographies, closed-form K,
/// per-view poses from homography decomposition, linear distortion fit,
/// reprojection summary.
#[derive(Debug, Clone)]
pub struct CameraCalibration {
    pub intrinsics: CameraIntrinsics,
    pub b_matrix: BMatrix,
    pub distortion: DistortionCoeffs,
    pub poses: Vec<(RotationMatrix, Vec3)>,
    pub stats: ReprojectionStats,
}

pub fn calibrate_camera(views: &[PlanarView]) -> Result<CameraCalibration, CameraError> {
    let (intrinsics, b_matrix) = solve_intrinsics(views)?;
    let k = intrinsics.k_matrix();
    let mut poses = Vec::with_capacity(views.len());
    for view in views {
        let h = estimate_homography(view)?;
        poses.push(decompose_homography(&h, &k)?);
    }
    let distortion = fit_distortion(views, &intrinsics, &poses)?;
    let (_, stats) = reprojection_errors(views, &intrinsics, &distortion, &poses)?;
    Ok(CameraCalibration {
        intrinsics,
        b_matrix,
        distortion,
        poses,
        stats,
    })
}
