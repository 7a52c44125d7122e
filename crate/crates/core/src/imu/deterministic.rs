//! Multi-position deterministic calibration: accelerometer scale, bias and
//! misalignment from static gravity readings; gyroscope scale and
//! misalignment from gravity-direction propagation across motion segments.

use nalgebra::{DMatrix, DVector};

use super::{ImuDeterministicParams, ImuError, ImuSample, StaticIntervalStats};
use crate::geometry::{UnitQuaternion, Vec3};

/// Result of the accelerometer fit.
#[derive(Debug, Clone)]
pub struct AccelCalibration {
    pub bias: Vec3,
    pub scale: Vec3,
    pub misalign: Vec3,
    pub final_loss: f64,
    pub iterations: usize,
    /// Whether the loss dropped below the noise-free target 1e-6 · M · g⁴.
    pub met_loss_target: bool,
    pub loss_trace: Vec<f64>,
}

impl AccelCalibration {
    pub fn params(&self) -> ImuDeterministicParams {
        ImuDeterministicParams {
            accel_bias: self.bias,
            accel_scale: self.scale,
            accel_misalign: self.misalign,
            ..ImuDeterministicParams::identity()
        }
    }
}

/// Result of the gyroscope fit.
#[derive(Debug, Clone)]
pub struct GyroCalibration {
    pub bias: Vec3,
    pub scale: Vec3,
    pub misalign: Vec3,
    pub final_loss: f64,
    pub iterations: usize,
    pub segments_used: usize,
    pub loss_trace: Vec<f64>,
}

/// Fit (M, S, b) minimizing Σ (‖g‖² − ‖M S (a_k − b)‖²)² over the static
/// orientation means, Levenberg–Marquardt from identity/zero start.
///
/// Needs at least 9 well-spread orientations; a rank-deficient Jacobian at
/// the solution reports an observability error.
pub fn calibrate_accelerometer(
    static_means: &[Vec3],
    gravity: f64,
) -> Result<AccelCalibration, ImuError> {
    let m = static_means.len();
    if m < 9 {
        return Err(ImuError::NotEnoughOrientations { needed: 9, got: m });
    }
    if static_means
        .iter()
        .any(|v| v.iter().any(|x| !x.is_finite()))
    {
        return Err(ImuError::InvalidInput("static means must be finite".into()));
    }

    let g2 = gravity * gravity;
    // theta = (mis_xy, mis_xz, mis_yz, s_x, s_y, s_z, b_x, b_y, b_z)
    let residuals = |theta: &DVector<f64>, out: &mut DVector<f64>| {
        let det = unpack_accel(theta);
        for (k, a) in static_means.iter().enumerate() {
            let h = det.correct_accel(a);
            out[k] = g2 - h.norm_squared();
        }
    };

    let x0 = DVector::from_vec(vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0]);
    let lm = levenberg_marquardt(&residuals, x0, m, &LmOptions::default())?;

    // observability: the Jacobian at the solution must have full column rank
    let jac = numerical_jacobian(&residuals, &lm.x, m);
    let svd = jac.svd(false, false);
    let sv = &svd.singular_values;
    let max_sv = sv.iter().cloned().fold(0.0_f64, f64::max);
    let min_sv = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if max_sv <= 0.0 || min_sv / max_sv < 1e-9 {
        return Err(ImuError::Observability(format!(
            "accelerometer orientations too clustered (singular value ratio {:.2e})",
            min_sv / max_sv.max(1e-300)
        )));
    }

    let loss_target = 1e-6 * m as f64 * g2 * g2;
    let det = unpack_accel(&lm.x);
    if !lm.converged && lm.final_cost > loss_target {
        return Err(ImuError::Convergence {
            iterations: lm.iterations,
            final_loss: lm.final_cost,
            trace: lm.trace,
        });
    }
    Ok(AccelCalibration {
        bias: det.accel_bias,
        scale: det.accel_scale,
        misalign: det.accel_misalign,
        final_loss: lm.final_cost,
        iterations: lm.iterations,
        met_loss_target: lm.final_cost < loss_target,
        loss_trace: lm.trace,
    })
}

fn unpack_accel(theta: &DVector<f64>) -> ImuDeterministicParams {
    ImuDeterministicParams {
        accel_misalign: Vec3::new(theta[0], theta[1], theta[2]),
        accel_scale: Vec3::new(theta[3], theta[4], theta[5]),
        accel_bias: Vec3::new(theta[6], theta[7], theta[8]),
        ..ImuDeterministicParams::identity()
    }
}

/// Propagate a body-frame gravity direction through a motion segment by
/// quaternion midpoint integration of the corrected gyro rates:
/// u(t) = R(q_{b0 bt})ᵀ u(0).
pub(crate) fn propagate_gravity_direction(
    motion: &[ImuSample],
    u_start: &Vec3,
    correct: impl Fn(&Vec3) -> Vec3,
) -> Vec3 {
    let mut q = UnitQuaternion::identity();
    for pair in motion.windows(2) {
        let dt = pair[1].t - pair[0].t;
        let w_mid = correct(&(0.5 * (pair[0].gyro + pair[1].gyro)));
        q = q * UnitQuaternion::from_rotation_vector(&(w_mid * dt));
    }
    q.rotate_inverse(u_start)
}

/// Fit gyro scale and misalignment by matching propagated gravity directions
/// against the calibrated-accelerometer directions at the next static
/// interval. Gyro bias is the mean over the initial static interval and held
/// fixed.
pub fn calibrate_gyroscope(
    samples: &[ImuSample],
    statics: &[StaticIntervalStats],
    accel_cal: &ImuDeterministicParams,
    _gravity: f64,
) -> Result<GyroCalibration, ImuError> {
    if statics.len() < 2 {
        return Err(ImuError::NotEnoughOrientations {
            needed: 2,
            got: statics.len(),
        });
    }

    // leading/trailing motion has no static bracket; that data cannot be used
    if samples[0].t < statics[0].t_start - 1.0 {
        return Err(ImuError::MissingStaticBracket { segment: 0 });
    }
    if samples.last().unwrap().t > statics.last().unwrap().t_end + 1.0 {
        return Err(ImuError::MissingStaticBracket {
            segment: statics.len(),
        });
    }

    let gyro_bias = statics[0].mean_gyro;

    // gravity directions from the calibrated accelerometer
    let u: Vec<Vec3> = statics
        .iter()
        .map(|s| accel_cal.correct_accel(&s.mean_accel).normalize())
        .collect();

    // motion segments between consecutive static intervals
    let mut segments: Vec<&[ImuSample]> = Vec::new();
    for k in 1..statics.len() {
        let a = statics[k - 1].t_end;
        let b = statics[k].t_start;
        let lo = samples.partition_point(|s| s.t < a);
        let hi = samples.partition_point(|s| s.t <= b);
        segments.push(&samples[lo..hi]);
    }

    let n_res = 3 * segments.len();
    let residuals = |theta: &DVector<f64>, out: &mut DVector<f64>| {
        let det = unpack_gyro(theta, &gyro_bias);
        for (k, seg) in segments.iter().enumerate() {
            let u_g = if seg.len() >= 2 {
                propagate_gravity_direction(seg, &u[k], |w| det.correct_gyro(w))
            } else {
                u[k]
            };
            let r = u[k + 1] - u_g;
            out[3 * k] = r.x;
            out[3 * k + 1] = r.y;
            out[3 * k + 2] = r.z;
        }
    };

    let x0 = DVector::from_vec(vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
    let lm = levenberg_marquardt(&residuals, x0, n_res, &LmOptions::default())?;

    let jac = numerical_jacobian(&residuals, &lm.x, n_res);
    let svd = jac.svd(false, false);
    let sv = &svd.singular_values;
    let max_sv = sv.iter().cloned().fold(0.0_f64, f64::max);
    let min_sv = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if max_sv <= 0.0 || min_sv / max_sv < 1e-9 {
        return Err(ImuError::Observability(format!(
            "gyro excitation insufficient (singular value ratio {:.2e})",
            min_sv / max_sv.max(1e-300)
        )));
    }

    let det = unpack_gyro(&lm.x, &gyro_bias);
    Ok(GyroCalibration {
        bias: gyro_bias,
        scale: det.gyro_scale,
        misalign: det.gyro_misalign,
        final_loss: lm.final_cost,
        iterations: lm.iterations,
        segments_used: segments.len(),
        loss_trace: lm.trace,
    })
}

fn unpack_gyro(theta: &DVector<f64>, bias: &Vec3) -> ImuDeterministicParams {
    ImuDeterministicParams {
        gyro_misalign: Vec3::new(theta[0], theta[1], theta[2]),
        gyro_scale: Vec3::new(theta[3], theta[4], theta[5]),
        gyro_bias: *bias,
        ..ImuDeterministicParams::identity()
    }
}

// ---------------------------------------------------------------------------
// Levenberg–Marquardt with numerical Jacobian
// ---------------------------------------------------------------------------

struct LmOptions {
    max_iter: usize,
    grad_tol: f64,
    step_tol: f64,
    reduction_tol: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iter: 200,
            grad_tol: 1e-12,
            step_tol: 1e-14,
            reduction_tol: 1e-14,
        }
    }
}

struct LmOutcome {
    x: DVector<f64>,
    final_cost: f64,
    iterations: usize,
    converged: bool,
    trace: Vec<f64>,
}

fn numerical_jacobian(
    f: &impl Fn(&DVector<f64>, &mut DVector<f64>),
    x: &DVector<f64>,
    n_res: usize,
) -> DMatrix<f64> {
    let n = x.len();
    let mut jac = DMatrix::zeros(n_res, n);
    let mut plus = DVector::zeros(n_res);
    let mut minus = DVector::zeros(n_res);
    let mut xp = x.clone();
    for j in 0..n {
        let h = 1e-6 * x[j].abs().max(1.0);
        xp[j] = x[j] + h;
        f(&xp, &mut plus);
        xp[j] = x[j] - h;
        f(&xp, &mut minus);
        xp[j] = x[j];
        for i in 0..n_res {
            jac[(i, j)] = (plus[i] - minus[i]) / (2.0 * h);
        }
    }
    jac
}

fn levenberg_marquardt(
    f: &impl Fn(&DVector<f64>, &mut DVector<f64>),
    x0: DVector<f64>,
    n_res: usize,
    opts: &LmOptions,
) -> Result<LmOutcome, ImuError> {
    let mut x = x0;
    let mut r = DVector::zeros(n_res);
    f(&x, &mut r);
    let mut cost = r.norm_squared();
    let mut lambda = 1e-3;
    let mut trace = vec![cost];
    let mut converged = false;
    let mut iterations = 0;

    for iter in 0..opts.max_iter {
        iterations = iter + 1;
        let jac = numerical_jacobian(f, &x, n_res);
        let grad = jac.transpose() * &r;
        if grad.amax() < opts.grad_tol * (1.0 + cost) {
            converged = true;
            break;
        }
        let hess = jac.transpose() * &jac;

        let mut stepped = false;
        for _ in 0..60 {
            let mut damped = hess.clone();
            for i in 0..damped.nrows() {
                damped[(i, i)] += lambda * hess[(i, i)].max(1e-12);
            }
            let step = match damped.clone().lu().solve(&(-&grad)) {
                Some(s) => s,
                None => {
                    lambda *= 10.0;
                    continue;
                }
            };
            let candidate = &x + &step;
            let mut r_new = DVector::zeros(n_res);
            f(&candidate, &mut r_new);
            let cost_new = r_new.norm_squared();
            if cost_new.is_finite() && cost_new < cost {
                let reduction = (cost - cost_new) / cost.max(1e-300);
                x = candidate;
                r = r_new;
                cost = cost_new;
                trace.push(cost);
                lambda = (lambda * 0.3).max(1e-12);
                stepped = true;
                if reduction < opts.reduction_tol || step.norm() < opts.step_tol {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
            if lambda > 1e14 {
                break;
            }
        }
        if converged {
            break;
        }
        if !stepped {
            // damping exhausted: local minimum to machine precision
            converged = true;
            break;
        }
    }

    Ok(LmOutcome {
        x,
        final_cost: cost,
        iterations,
        converged,
        trace,
    })
}
