//! Projection through the pinhole + distortion model and reprojection
//! residual bookkeeping.

use super::{apply_distortion, CameraError, CameraIntrinsics, DistortionCoeffs, Pixel, PlanarView};
use crate::geometry::{RotationMatrix, Vec3};

/// Cutoff below which a positive depth is treated as degenerate.
pub const MIN_DEPTH: f64 = 1e-12;

/// Project a camera-frame point: u = fx X/Z + cx, v = fy Y/Z + cy.
pub fn project_to_pixel(p: &Vec3, intr: &CameraIntrinsics) -> Result<Pixel, CameraError> {
    if p.z <= 0.0 {
        return Err(CameraError::BehindCamera { z: p.z });
    }
    if p.z < MIN_DEPTH {
        return Err(CameraError::DegenerateDepth { z: p.z });
    }
    Ok(Pixel::new(
        intr.fx * p.x / p.z + intr.cx,
        intr.fy * p.y / p.z + intr.cy,
    ))
}

/// Full chain world → camera → normalized plane → distortion → pixel.
pub fn world_to_pixel(
    p_w: &Vec3,
    rot: &RotationMatrix,
    t: &Vec3,
    intr: &CameraIntrinsics,
    dist: &DistortionCoeffs,
) -> Result<Pixel, CameraError> {
    let p_c = rot.apply(p_w) + t;
    if p_c.z <= 0.0 {
        return Err(CameraError::BehindCamera { z: p_c.z });
    }
    if p_c.z < MIN_DEPTH {
        return Err(CameraError::DegenerateDepth { z: p_c.z });
    }
    let norm = nalgebra::Vector2::new(p_c.x / p_c.z, p_c.y / p_c.z);
    let distorted = apply_distortion(&norm, dist);
    Ok(Pixel::new(
        intr.fx * distorted.x + intr.cx,
        intr.fy * distorted.y + intr.cy,
    ))
}

/// Max and RMS over a set of per-corner residuals.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ReprojectionStats {
    pub rms: f64,
    pub max: f64,
    pub count: usize,
}

impl ReprojectionStats {
    pub fn from_residuals<'a>(residuals: impl Iterator<Item = &'a Pixel>) -> Self {
        let mut sum_sq = 0.0;
        let mut max = 0.0_f64;
        let mut count = 0;
        for r in residuals {
            let n = r.norm();
            sum_sq += n * n;
            max = max.max(n);
            count += 1;
        }
        let rms = if count > 0 {
            (sum_sq / count as f64).sqrt()
        } else {
            0.0
        };
        Self { rms, max, count }
    }
}

/// Per-corner residuals (observed − predicted) for each view, given one pose
/// per view. Pose maps target-plane coordinates (X, Y, 0) into the camera
/// frame.
pub fn reprojection_errors(
    views: &[PlanarView],
    intr: &CameraIntrinsics,
    dist: &DistortionCoeffs,
    poses: &[(RotationMatrix, Vec3)],
) -> Result<(Vec<Vec<Pixel>>, ReprojectionStats), CameraError> {
    if views.len() != poses.len() {
        return Err(CameraError::InvalidInput(format!(
            "{} views but {} poses",
            views.len(),
            poses.len()
        )));
    }
    let mut all = Vec::with_capacity(views.len());
    for (view, (rot, t)) in views.iter().zip(poses) {
        let mut residuals = Vec::with_capacity(view.points.len());
        for c in &view.points {
            let p_w = Vec3::new(c.target.x, c.target.y, 0.0);
            let predicted = world_to_pixel(&p_w, rot, t, intr, dist)?;
            residuals.push(c.pixel - predicted);
        }
        all.push(residuals);
    }
    let stats = ReprojectionStats::from_residuals(all.iter().flatten());
    Ok((all, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::UnitQuaternion;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn bench_intrinsics() -> CameraIntrinsics {
        CameraIntrinsics::new(
            1091.635505127837,
            1094.097509334247,
            615.7646844724167,
            336.08607722962415,
        )
        .unwrap()
    }

    #[test]
    fn optical_axis_hits_principal_point() {
        let intr = bench_intrinsics();
        let px = project_to_pixel(&Vec3::new(0.0, 0.0, 1.0), &intr).unwrap();
        assert_eq!(px, Pixel::new(intr.cx, intr.cy));
    }

    #[test]
    fn projection_matches_scalar_arithmetic() {
        // oracle: fx*X/Z + cx, fy*Y/Z + cy evaluated by hand
        let intr = bench_intrinsics();
        let px = project_to_pixel(&Vec3::new(0.1, 0.05, 1.0), &intr).unwrap();
        assert!((px.x - 724.928).abs() < 1e-3);
        assert!((px.y - 390.791).abs() < 1e-3);
        assert!((px.x - (intr.fx * 0.1 + intr.cx)).abs() < 1e-12);
        assert!((px.y - (intr.fy * 0.05 + intr.cy)).abs() < 1e-12);
    }

    #[test]
    fn projective_scale_invariance() {
        let intr = bench_intrinsics();
        let p = Vec3::new(0.4, -0.3, 2.0);
        let a = project_to_pixel(&p, &intr).unwrap();
        let b = project_to_pixel(&(2.0 * p), &intr).unwrap();
        assert!((a - b).norm() < 1e-12);
    }

    #[test]
    fn depth_errors() {
        let intr = bench_intrinsics();
        assert!(matches!(
            project_to_pixel(&Vec3::new(0.0, 0.0, -1.0), &intr),
            Err(CameraError::BehindCamera { .. })
        ));
        assert!(matches!(
            project_to_pixel(&Vec3::new(0.0, 0.0, 1e-14), &intr),
            Err(CameraError::DegenerateDepth { .. })
        ));
    }

    #[test]
    fn world_to_pixel_reduces_to_projection() {
        let intr = bench_intrinsics();
        let p = Vec3::new(0.2, -0.1, 1.5);
        let direct = project_to_pixel(&p, &intr).unwrap();
        let full = world_to_pixel(
            &p,
            &RotationMatrix::identity(),
            &Vec3::zeros(),
            &intr,
            &DistortionCoeffs::zero(),
        )
        .unwrap();
        assert!((direct - full).norm() < 1e-14);
    }

    #[test]
    fn world_to_pixel_matches_matrix_form() {
        // oracle: K (R P + t) / Z with zero distortion
        let intr = bench_intrinsics();
        let k = intr.k_matrix();
        let mut rng = StdRng::seed_from_u64(11);
        let mut tested = 0;
        while tested < 200 {
            let q = UnitQuaternion::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-0.3..0.3),
                rng.gen_range(-0.3..0.3),
                rng.gen_range(-0.3..0.3),
            );
            let q = match q {
                Ok(q) => q,
                Err(_) => continue,
            };
            let rot = q.to_rotation();
            let t = Vec3::new(
                rng.gen_range(-0.5..0.5),
                rng.gen_range(-0.5..0.5),
                rng.gen_range(1.0..3.0),
            );
            let p_w = Vec3::new(rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3), 0.0);
            let p_c = rot.apply(&p_w) + t;
            if p_c.z < 0.1 {
                continue;
            }
            let by_matrix = k * p_c / p_c.z;
            let px = world_to_pixel(&p_w, &rot, &t, &intr, &DistortionCoeffs::zero()).unwrap();
            assert!((px.x - by_matrix.x).abs() < 1e-10);
            assert!((px.y - by_matrix.y).abs() < 1e-10);
            tested += 1;
        }
    }

    #[test]
    fn distortion_fixed_point_at_principal_axis() {
        // normalized point at origin: distortion vanishes, any coefficients
        let intr = bench_intrinsics();
        let d = DistortionCoeffs {
            k1: 0.3,
            k2: -0.2,
            p1: 0.05,
            p2: -0.04,
        };
        let px = world_to_pixel(
            &Vec3::zeros(),
            &RotationMatrix::identity(),
            &Vec3::new(0.0, 0.0, 1.0),
            &intr,
            &d,
        )
        .unwrap();
        assert!((px - Pixel::new(intr.cx, intr.cy)).norm() < 1e-12);
    }

    #[test]
    fn reprojection_count_mismatch_is_error() {
        let intr = bench_intrinsics();
        let views = vec![PlanarView::new(0, vec![])];
        let res = reprojection_errors(&views, &intr, &DistortionCoeffs::zero(), &[]);
        assert!(matches!(res, Err(CameraError::InvalidInput(_))));
    }
}
