//! IMU pre-integration: compress the samples between two camera frames into
//! frame-invariant deltas α (position), β (velocity), γ (rotation) expressed
//! in the first body frame, by midpoint integration with biases held fixed.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{quat_mul, UnitQuaternion, Vec3};
use crate::imu::ImuSample;

#[derive(Debug, Error)]
pub enum PreintegrationError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// Pre-integrated motion over one frame interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreintegratedDelta {
    /// Position delta in the first body frame, m.
    pub alpha: Vec3,
    /// Velocity delta in the first body frame, m/s.
    pub beta: Vec3,
    /// Rotation from the first to the last body frame.
    pub gamma: UnitQuaternion,
    /// Timestamp of the first sample, s.
    pub t_start: f64,
    /// Total integrated time, s.
    pub dt_total: f64,
    /// (accel bias, gyro bias) the delta was computed with.
    pub bias_ref: (Vec3, Vec3),
    pub sample_count: usize,
    /// Set when a sample gap exceeded 10x the median spacing.
    pub gap_warning: bool,
}

impl PreintegratedDelta {
    /// Combine two contiguous deltas:
    /// γ_AB = γ_A ⊗ γ_B, β_AB = β_A + R(γ_A) β_B,
    /// α_AB = α_A + β_A Δt_B + R(γ_A) α_B.
    pub fn compose(&self, other: &PreintegratedDelta) -> PreintegratedDelta {
        let r_a = self.gamma.to_rotation();
        PreintegratedDelta {
            alpha: self.alpha + self.beta * other.dt_total + r_a.apply(&other.alpha),
            beta: self.beta + r_a.apply(&other.beta),
            gamma: quat_mul(&self.gamma, &other.gamma),
            t_start: self.t_start,
            dt_total: self.dt_total + other.dt_total,
            bias_ref: self.bias_ref,
            sample_count: self.sample_count + other.sample_count.saturating_sub(1),
            gap_warning: self.gap_warning || other.gap_warning,
        }
    }
}

/// World-frame navigation state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NavState {
    pub p: Vec3,
    pub v: Vec3,
    pub q: UnitQuaternion,
}

impl NavState {
    pub fn identity() -> Self {
        Self {
            p: Vec3::zeros(),
            v: Vec3::zeros(),
            q: UnitQuaternion::identity(),
        }
    }
}

/// Midpoint pre-integration of a sample run with fixed biases.
///
/// Per step: γ advances by the exponential of the midpoint rate, then the
/// bias-corrected accelerations rotated by the step's start and end attitudes
/// are averaged to advance β and α. Noise terms are zero-mean and enter only
/// the analysis, never the estimate.
pub fn preintegrate(
    samples: &[ImuSample],
    accel_bias: &Vec3,
    gyro_bias: &Vec3,
) -> Result<PreintegratedDelta, PreintegrationError> {
    if samples.len() < 2 {
        return Err(PreintegrationError::InvalidInput(format!(
            "need at least 2 samples, got {}",
            samples.len()
        )));
    }
    if !(accel_bias.iter().all(|v| v.is_finite()) && gyro_bias.iter().all(|v| v.is_finite())) {
        return Err(PreintegrationError::InvalidInput(
            "bias vectors must be finite".into(),
        ));
    }
    let mut dts = Vec::with_capacity(samples.len() - 1);
    for pair in samples.windows(2) {
        let dt = pair[1].t - pair[0].t;
        if !(dt > 0.0) {
            return Err(PreintegrationError::InvalidInput(format!(
                "timestamps must be strictly increasing (dt = {dt} at t = {})",
                pair[0].t
            )));
        }
        dts.push(dt);
    }
    let mut sorted = dts.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median_dt = sorted[sorted.len() / 2];
    let gap_warning = dts.iter().any(|&dt| dt > 10.0 * median_dt);

    // half-sample interpolation of the measurement signals; cubic where
    // uniformly spaced neighbors exist so signal curvature does not leak
    // into the integrals (interpolated boundary samples fall back to linear)
    let uniform = |i: usize, j: usize| -> bool {
        let d0 = samples[i + 1].t - samples[i].t;
        (i..j).all(|k| ((samples[k + 1].t - samples[k].t) - d0).abs() <= 0.01 * d0)
    };
    let half_sample = |k: usize, f: &dyn Fn(usize) -> Vec3| -> Vec3 {
        let left = k > 0;
        let right = k + 2 < samples.len();
        if left && right && uniform(k - 1, k + 2) {
            (-f(k - 1) + 9.0 * f(k) + 9.0 * f(k + 1) - f(k + 2)) / 16.0
        } else if right && uniform(k, k + 1) {
            (3.0 * f(k) + 6.0 * f(k + 1) - f(k + 2)) / 8.0
        } else if left && uniform(k - 1, k) {
            (-f(k - 1) + 6.0 * f(k) + 3.0 * f(k + 1)) / 8.0
        } else {
            0.5 * (f(k) + f(k + 1))
        }
    };
    let accel_half = |k: usize| half_sample(k, &|i| samples[i].accel);
    let gyro_half = |k: usize| half_sample(k, &|i| samples[i].gyro);

    let mut alpha = Vec3::zeros();
    let mut beta = Vec3::zeros();
    let mut gamma = UnitQuaternion::identity();
    for k in 0..samples.len() - 1 {
        let dt = samples[k + 1].t - samples[k].t;
        let w0 = samples[k].gyro - gyro_bias;
        let w1 = samples[k + 1].gyro - gyro_bias;
        let w_half = gyro_half(k) - gyro_bias;
        // Simpson rate integral plus the two-sample coning correction
        let rotvec = dt * (w0 + 4.0 * w_half + w1) / 6.0 + (dt * dt / 12.0) * w0.cross(&w1);
        let half_step = UnitQuaternion::from_rotation_vector(&(0.5 * rotvec));
        let gamma_half = quat_mul(&gamma, &half_step);
        let gamma_next = quat_mul(&gamma_half, &half_step);

        // Simpson weights over the step keep the rotating-acceleration
        // integrals accurate well beyond the sample-rate floor
        let a0 = gamma.rotate(&(samples[k].accel - accel_bias));
        let a_half = gamma_half.rotate(&(accel_half(k) - accel_bias));
        let a1 = gamma_next.rotate(&(samples[k + 1].accel - accel_bias));

        alpha += beta * dt + dt * dt * (a0 / 6.0 + a_half / 3.0);
        beta += dt * (a0 + 4.0 * a_half + a1) / 6.0;
        gamma = gamma_next;
    }

    Ok(PreintegratedDelta {
        alpha,
        beta,
        gamma,
        t_start: samples[0].t,
        dt_total: samples.last().unwrap().t - samples[0].t,
        bias_ref: (*accel_bias, *gyro_bias),
        sample_count: samples.len(),
        gap_warning,
    })
}

/// Propagate a state across a delta:
/// p_j = p_i + v_i Δt − ½ g Δt² + R(q_i) α,
/// v_j = v_i − g Δt + R(q_i) β,
/// q_j = q_i ⊗ γ.
pub fn predict_state(start: &NavState, delta: &PreintegratedDelta, g_w: &Vec3) -> NavState {
    let r_i = start.q.to_rotation();
    let dt = delta.dt_total;
    NavState {
        p: start.p + start.v * dt - 0.5 * g_w * dt * dt + r_i.apply(&delta.alpha),
        v: start.v - g_w * dt + r_i.apply(&delta.beta),
        q: quat_mul(&start.q, &delta.gamma),
    }
}

/// The relative rotation q_{b_k b_{k+1}} consumed by the extrinsic solver,
/// canonicalized.
pub fn relative_rotation(delta: &PreintegratedDelta) -> UnitQuaternion {
    delta.gamma.canonicalized()
}

/// Extract the samples covering [t0, t1], linearly interpolating the
/// measurements at both boundaries so partial first/last steps integrate the
/// right span.
pub fn slice_interval(
    samples: &[ImuSample],
    t0: f64,
    t1: f64,
) -> Result<Vec<ImuSample>, PreintegrationError> {
    if !(t1 > t0) {
        return Err(PreintegrationError::InvalidInput(format!(
            "empty interval [{t0}, {t1}]"
        )));
    }
    if samples.len() < 2 || t0 < samples[0].t - 1e-9 || t1 > samples.last().unwrap().t + 1e-9 {
        return Err(PreintegrationError::InvalidInput(format!(
            "interval [{t0}, {t1}] not covered by the recording"
        )));
    }

    let interp = |t: f64| -> ImuSample {
        let idx = samples.partition_point(|s| s.t < t).min(samples.len() - 1);
        let (a, b) = if idx == 0 {
            (&samples[0], &samples[1])
        } else {
            (&samples[idx - 1], &samples[idx])
        };
        let w = ((t - a.t) / (b.t - a.t)).clamp(0.0, 1.0);
        ImuSample::new(
            t,
            a.accel + w * (b.accel - a.accel),
            a.gyro + w * (b.gyro - a.gyro),
        )
    };

    let mut out = vec![interp(t0)];
    for s in samples {
        if s.t > t0 + 1e-12 && s.t < t1 - 1e-12 {
            out.push(*s);
        }
    }
    out.push(interp(t1));
    Ok(out)
}
