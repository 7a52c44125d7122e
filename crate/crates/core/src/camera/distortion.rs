//! Radial/tangential distortion on the normalized plane and its fixed-point
//! inverse.

use super::{CameraError, DistortionCoeffs, NormPoint};

/// Forward distortion model on normalized coordinates:
///
/// x' = x (1 + k1 r² + k2 r⁴) + 2 p1 x y + p2 (r² + 2 x²)
/// y' = y (1 + k1 r² + k2 r⁴) + p1 (r² + 2 y²) + 2 p2 x y
pub fn apply_distortion(p: &NormPoint, dist: &DistortionCoeffs) -> NormPoint {
    let (x, y) = (p.x, p.y);
    let r2 = x * x + y * y;
    let radial = 1.0 + dist.k1 * r2 + dist.k2 * r2 * r2;
    NormPoint::new(
        x * radial + 2.0 * dist.p1 * x * y + dist.p2 * (r2 + 2.0 * x * x),
        y * radial + dist.p1 * (r2 + 2.0 * y * y) + 2.0 * dist.p2 * x * y,
    )
}

/// Inverts `apply_distortion` by the fixed-point iteration
/// x ← p_dist − Δ(x), where Δ(x) = distort(x) − x.
///
/// Contracts for moderate coefficients (|k|,|p| ≤ 0.5) and points with
/// ‖p‖ ≤ 1.5; outside that domain convergence is not guaranteed and the
/// failure carries the last iterate.
pub fn undistort_point(
    p_dist: &NormPoint,
    dist: &DistortionCoeffs,
    tol: f64,
    max_iter: usize,
) -> Result<NormPoint, CameraError> {
    if !(p_dist.x.is_finite() && p_dist.y.is_finite()) {
        return Err(CameraError::InvalidInput(
            "distorted point must be finite".into(),
        ));
    }
    let mut x = *p_dist;
    let mut residual = f64::INFINITY;
    for iter in 0..max_iter {
        let forward = apply_distortion(&x, dist);
        residual = (forward - p_dist).norm();
        if residual <= tol {
            return Ok(x);
        }
        let next = p_dist - (forward - x);
        if !(next.x.is_finite() && next.y.is_finite()) {
            return Err(CameraError::UndistortDiverged {
                iterations: iter + 1,
                residual,
                last: x,
            });
        }
        x = next;
    }
    // accept the final iterate if the last correction landed inside tol
    let final_residual = (apply_distortion(&x, dist) - p_dist).norm();
    if final_residual <= tol {
        return Ok(x);
    }
    Err(CameraError::UndistortDiverged {
        iterations: max_iter,
        residual: residual.min(final_residual),
        last: x,
    })
}

/// Default tolerance for the fixed-point inverse.
pub const UNDISTORT_TOL: f64 = 1e-10;
/// Default iteration cap for the fixed-point inverse.
pub const UNDISTORT_MAX_ITER: usize = 50;

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    /// Distortion values used throughout the synthetic tests.
    pub(crate) fn bench_distortion() -> DistortionCoeffs {
        DistortionCoeffs {
            k1: 0.0158121998824731,
            k2: -0.04906947859369595,
            p1: -0.007932332725861788,
            p2: -0.0036593828274275953,
        }
    }

    #[test]
    fn zero_coefficients_is_identity() {
        let p = NormPoint::new(0.3, -0.7);
        assert_eq!(apply_distortion(&p, &DistortionCoeffs::zero()), p);
    }

    #[test]
    fn origin_is_fixed_point() {
        let p = NormPoint::new(0.0, 0.0);
        let d = bench_distortion();
        assert_eq!(apply_distortion(&p, &d), p);
        assert_eq!(undistort_point(&p, &d, 1e-12, 50).unwrap(), p);
    }

    #[test]
    fn forward_matches_scalar_arithmetic() {
        // oracle: term-by-term scalar evaluation at p = (0.1, 0)
        let d = bench_distortion();
        let p = NormPoint::new(0.1, 0.0);
        let r2 = 0.01;
        let expected_x = 0.1 * (1.0 + d.k1 * r2 + d.k2 * r2 * r2) + d.p2 * (r2 + 2.0 * 0.01);
        let expected_y = d.p1 * r2;
        let out = apply_distortion(&p, &d);
        assert!((out.x - expected_x).abs() < 1e-16);
        assert!((out.y - expected_y).abs() < 1e-16);
        // frozen from the oracle above
        assert!((out.x - 0.09990554002027372).abs() < 1e-15);
        assert!((out.y - (-7.932332725861788e-5)).abs() < 1e-18);
    }

    #[test]
    fn undistort_identity_with_zero_coeffs() {
        let p = NormPoint::new(0.4, 0.2);
        let out = undistort_point(&p, &DistortionCoeffs::zero(), 1e-12, 50).unwrap();
        assert_eq!(out, p);
    }

    #[test]
    fn round_trip_unit_disk() {
        // oracle: the forward model itself
        let d = bench_distortion();
        let mut rng = StdRng::seed_from_u64(42);
        for _ in 0..1000 {
            let r: f64 = rng.gen_range(0.0..1.0);
            let th: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            let p = NormPoint::new(r * th.cos(), r * th.sin());
            let distorted = apply_distortion(&p, &d);
            let back = undistort_point(&distorted, &d, 1e-12, 50).unwrap();
            assert!(
                (back - p).norm() < 1e-9,
                "round trip failed at {p:?}: {back:?}"
            );
        }
    }

    #[test]
    fn divergence_reports_last_iterate() {
        // absurd coefficients outside the documented domain
        let d = DistortionCoeffs {
            k1: -80.0,
            k2: 30.0,
            p1: 2.0,
            p2: -4.0,
        };
        let p = NormPoint::new(1.2, -0.9);
        match undistort_point(&p, &d, 1e-12, 30) {
            Err(CameraError::UndistortDiverged {
                iterations,
                residual,
                last,
            }) => {
                assert!(iterations <= 30);
                assert!(!(residual <= 1e-12));
                assert!(last.x.is_finite() && last.y.is_finite());
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }
}
