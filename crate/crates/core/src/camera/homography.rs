//! Plane-to-image homography: normalized DLT estimation and decomposition
//! into a camera pose given K.

use nalgebra::{DMatrix, Vector2, Vector3};

use super::{CameraError, PlanarView};
use crate::geometry::{Mat3, RotationMatrix, Vec3};

/// Estimate H mapping homogeneous target-plane points (X, Y, 1) to pixel rays
/// by the DLT with Hartley normalization of both point sets.
///
/// H is scaled so H[2][2] = 1 when that entry is safely nonzero, otherwise to
/// unit Frobenius norm.
pub fn estimate_homography(view: &PlanarView) -> Result<Mat3, CameraError> {
    view.validate()?;
    let n = view.points.len();

    let t_src = normalizing_transform(view.points.iter().map(|c| c.target));
    let t_dst = normalizing_transform(view.points.iter().map(|c| c.pixel));

    // pad to at least 9 rows so the thin SVD still exposes the null space
    // when the view has exactly 4 points (8 constraint rows)
    let mut a = DMatrix::<f64>::zeros((2 * n).max(9), 9);
    for (i, c) in view.points.iter().enumerate() {
        let s = apply_h(&t_src, &Vector2::new(c.target.x, c.target.y));
        let d = apply_h(&t_dst, &Vector2::new(c.pixel.x, c.pixel.y));
        let (x, y) = (s.x, s.y);
        let (u, v) = (d.x, d.y);
        a.row_mut(2 * i)
            .copy_from_slice(&[x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y, -u]);
        a.row_mut(2 * i + 1)
            .copy_from_slice(&[0.0, 0.0, 0.0, x, y, 1.0, -v * x, -v * y, -v]);
    }

    let svd = a.svd(false, true);
    let v_t = svd.v_t.as_ref().expect("svd Vt");
    let sv = &svd.singular_values;
    let (min_idx, _) = argmin(sv.iter().copied());

    // A collinear target makes the DLT rank-deficient: the two smallest
    // singular values collapse together.
    let max_sv = sv.iter().cloned().fold(0.0_f64, f64::max);
    let mut sorted: Vec<f64> = sv.iter().copied().collect();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    if max_sv <= 0.0 || sorted[1] / max_sv < 1e-10 {
        return Err(CameraError::DegenerateView(format!(
            "view {}: rank-deficient correspondence geometry (collinear target points?)",
            view.view_id
        )));
    }

    let h_row = v_t.row(min_idx);
    let h_norm = Mat3::new(
        h_row[0], h_row[1], h_row[2], //
        h_row[3], h_row[4], h_row[5], //
        h_row[6], h_row[7], h_row[8],
    );

    // undo normalization: H = T_dst⁻¹ H_norm T_src
    let t_dst_inv = t_dst
        .try_inverse()
        .expect("similarity transform invertible");
    let mut h = t_dst_inv * h_norm * t_src;

    if h[(2, 2)].abs() > 1e-9 {
        h /= h[(2, 2)];
    } else {
        h /= h.norm();
    }
    Ok(h)
}

/// Decompose a plane homography into the camera pose (R, t) given K, using
/// r1 = λ K⁻¹ h1, r2 = λ K⁻¹ h2, r3 = r1 × r2, t = λ K⁻¹ h3 with the sign of
/// λ fixed so the target sits in front of the camera.
pub fn decompose_homography(h: &Mat3, k: &Mat3) -> Result<(RotationMatrix, Vec3), CameraError> {
    let k_inv = k
        .try_inverse()
        .ok_or_else(|| CameraError::InvalidInput("K is singular".into()))?;
    let m = k_inv * h;
    let m1: Vector3<f64> = m.column(0).into();
    let m2: Vector3<f64> = m.column(1).into();
    let m3: Vector3<f64> = m.column(2).into();

    let n1 = m1.norm();
    if n1 < 1e-12 {
        return Err(CameraError::DegenerateView(
            "homography first column vanishes under K⁻¹".into(),
        ));
    }
    // average the two column norms; they are equal for an exact homography
    let lambda = 2.0 / (n1 + m2.norm());
    let mut r1 = lambda * m1;
    let mut r2 = lambda * m2;
    let mut t = lambda * m3;
    if t.z < 0.0 {
        r1 = -r1;
        r2 = -r2;
        t = -t;
    }
    let r3 = r1.cross(&r2);
    let raw = Mat3::from_columns(&[r1, r2, r3]);
    Ok((RotationMatrix::project_to_so3(&raw), t))
}

/// Hartley normalization: translate the centroid to the origin and scale the
/// mean distance to sqrt(2).
fn normalizing_transform(points: impl Iterator<Item = Vector2<f64>> + Clone) -> Mat3 {
    let mut centroid = Vector2::zeros();
    let mut n = 0usize;
    for p in points.clone() {
        centroid += p;
        n += 1;
    }
    centroid /= n as f64;
    let mean_dist: f64 = points.map(|p| (p - centroid).norm()).sum::<f64>() / n as f64;
    let scale = if mean_dist > 1e-12 {
        std::f64::consts::SQRT_2 / mean_dist
    } else {
        1.0
    };
    Mat3::new(
        scale,
        0.0,
        -scale * centroid.x, //
        0.0,
        scale,
        -scale * centroid.y, //
        0.0,
        0.0,
        1.0,
    )
}

fn apply_h(h: &Mat3, p: &Vector2<f64>) -> Vector2<f64> {
    let v = h * Vector3::new(p.x, p.y, 1.0);
    Vector2::new(v.x / v.z, v.y / v.z)
}

fn argmin(values: impl Iterator<Item = f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, v) in values.enumerate() {
        if v < best.1 {
            best = (i, v);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::{CameraIntrinsics, Correspondence, Pixel, TargetPoint};
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};
    use rand_distr::{Distribution, Normal};

    fn grid_targets(rows: usize, cols: usize, spacing: f64) -> Vec<TargetPoint> {
        let mut pts = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                pts.push(TargetPoint::new(c as f64 * spacing, r as f64 * spacing));
            }
        }
        pts
    }

    fn bench_k() -> Mat3 {
        CameraIntrinsics::new(1091.6355, 1094.0975, 615.7647, 336.0861)
            .unwrap()
            .k_matrix()
    }

    /// Synthetic view of a grid through H = K [r1 r2 t].
    fn synthetic_view(
        k: &Mat3,
        rot: &RotationMatrix,
        t: &Vec3,
        noise: f64,
        seed: u64,
    ) -> (PlanarView, Mat3) {
        let r = rot.matrix();
        let h_true = k * Mat3::from_columns(&[r.column(0).into(), r.column(1).into(), *t]);
        let mut rng = StdRng::seed_from_u64(seed);
        let gauss = Normal::new(0.0, noise.max(1e-300)).unwrap();
        let points = grid_targets(6, 6, 0.03)
            .into_iter()
            .map(|tp| {
                let px = apply_h(&h_true, &tp);
                let jitter = if noise > 0.0 {
                    Pixel::new(gauss.sample(&mut rng), gauss.sample(&mut rng))
                } else {
                    Pixel::zeros()
                };
                Correspondence {
                    target: tp,
                    pixel: px + jitter,
                }
            })
            .collect();
        (PlanarView::new(0, points), h_true)
    }

    fn tilted_pose(rx: f64, ry: f64, dist: f64) -> (RotationMatrix, Vec3) {
        let rot = RotationMatrix::rot_x(rx) * RotationMatrix::rot_y(ry);
        // keep the grid roughly centered in front of the camera
        (rot, Vec3::new(-0.08, -0.08, dist))
    }

    #[test]
    fn identity_mapping_gives_identity_h() {
        // 4 points whose pixels equal their target coordinates
        let pts = [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0)];
        let view = PlanarView::new(
            0,
            pts.iter()
                .map(|&(x, y)| Correspondence {
                    target: TargetPoint::new(x, y),
                    pixel: Pixel::new(x, y),
                })
                .collect(),
        );
        let h = estimate_homography(&view).unwrap();
        assert!((h - Mat3::identity()).norm() < 1e-10);
    }

    #[test]
    fn recovers_synthetic_homography() {
        let k = bench_k();
        let (rot, t) = tilted_pose(0.3, -0.25, 0.8);
        let (view, h_true) = synthetic_view(&k, &rot, &t, 0.0, 0);
        let h = estimate_homography(&view).unwrap();
        // compare up to scale
        let h_n = h / h.norm();
        let mut h_t = h_true / h_true.norm();
        if (h_n - h_t).norm() > (h_n + h_t).norm() {
            h_t = -h_t;
        }
        assert!(
            (h_n - h_t).norm() < 1e-8,
            "angular gap {}",
            (h_n - h_t).norm()
        );
    }

    #[test]
    fn noisy_views_reproject_under_two_tenths_px() {
        // 0.1 px corner noise on 36 points; homography reprojection RMS < 0.2 px
        let k = bench_k();
        for trial in 0..100u64 {
            let (rot, t) = tilted_pose(0.25, 0.2, 0.9);
            let (view, _) = synthetic_view(&k, &rot, &t, 0.1, 1000 + trial);
            let h = estimate_homography(&view).unwrap();
            let mut sum_sq = 0.0;
            for c in &view.points {
                let p = apply_h(&h, &c.target);
                sum_sq += (p - c.pixel).norm_squared();
            }
            let rms = (sum_sq / view.points.len() as f64).sqrt();
            assert!(rms < 0.2, "trial {trial}: rms {rms}");
        }
    }

    #[test]
    fn collinear_points_rejected() {
        let view = PlanarView::new(
            0,
            (0..6)
                .map(|i| Correspondence {
                    target: TargetPoint::new(i as f64 * 0.05, 0.0),
                    pixel: Pixel::new(100.0 + i as f64 * 40.0, 250.0),
                })
                .collect(),
        );
        assert!(matches!(
            estimate_homography(&view),
            Err(CameraError::DegenerateView(_))
        ));
    }

    #[test]
    fn too_few_points_rejected() {
        let view = PlanarView::new(
            0,
            (0..3)
                .map(|i| Correspondence {
                    target: TargetPoint::new(i as f64, (i * i) as f64),
                    pixel: Pixel::new(i as f64, (i * i) as f64),
                })
                .collect(),
        );
        assert!(estimate_homography(&view).is_err());
    }

    #[test]
    fn decomposition_recovers_pose() {
        let k = bench_k();
        let mut rng = StdRng::seed_from_u64(77);
        for _ in 0..50 {
            let (rot, t) = tilted_pose(
                rng.gen_range(-0.4..0.4),
                rng.gen_range(-0.4..0.4),
                rng.gen_range(0.5..1.5),
            );
            let (view, _) = synthetic_view(&k, &rot, &t, 0.0, 3);
            let h = estimate_homography(&view).unwrap();
            let (r_est, t_est) = decompose_homography(&h, &k).unwrap();
            let gap = (r_est.matrix() - rot.matrix()).norm();
            assert!(gap < 1e-6, "rotation gap {gap}");
            assert!(
                (t_est - t).norm() < 1e-6,
                "translation gap {}",
                (t_est - t).norm()
            );
        }
    }
}
