//! Forward measurement model, bias propagation and the continuous↔discrete
//! noise conversion.

use super::{ImuDeterministicParams, ImuError, ImuNoiseParams, ImuSample};
use crate::geometry::{RotationMatrix, Vec3};

/// Which discretization law to apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseKind {
    /// White noise: discrete sigma = sigma / sqrt(dt).
    White,
    /// Random walk increment: discrete sigma = sigma * sqrt(dt).
    Walk,
}

/// Continuous noise density to the per-sample discrete sigma.
pub fn discretize_noise(sigma: f64, dt: f64, kind: NoiseKind) -> Result<f64, ImuError> {
    if !(dt > 0.0) {
        return Err(ImuError::InvalidInput(format!(
            "dt must be positive, got {dt}"
        )));
    }
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(ImuError::InvalidInput(format!(
            "sigma must be finite and non-negative, got {sigma}"
        )));
    }
    Ok(match kind {
        NoiseKind::White => sigma / dt.sqrt(),
        NoiseKind::Walk => sigma * dt.sqrt(),
    })
}

/// One step of the bias dynamics: exponential decay toward zero for the
/// accelerometer bias when a finite time constant is set, pure random walk
/// for the gyro bias. `noise_draw` carries standard-normal draws that get
/// scaled to variance sigma_b² · dt.
pub fn propagate_bias(
    b_a: &Vec3,
    b_w: &Vec3,
    dt: f64,
    params: &ImuNoiseParams,
    noise_draw: (&Vec3, &Vec3),
) -> Result<(Vec3, Vec3), ImuError> {
    if !(dt > 0.0) {
        return Err(ImuError::InvalidInput(format!(
            "dt must be positive, got {dt}"
        )));
    }
    let decay = match params.tau {
        Some(tau) => (-dt / tau).exp(),
        None => 1.0,
    };
    let sd_a = params.sigma_ba * dt.sqrt();
    let sd_w = params.sigma_bw * dt.sqrt();
    Ok((decay * b_a + sd_a * noise_draw.0, b_w + sd_w * noise_draw.1))
}

/// Forward measurement model: the ideal readings
///
///   â = a_body + R_bw g_w + b_a + n_a,   ω̂ = ω_body + b_w + n_w
///
/// followed by the deterministic corruption (the inverse of
/// `correct_deterministic`), producing what the sensor would actually report.
#[allow(clippy::too_many_arguments)]
pub fn apply_measurement_model(
    t: f64,
    true_accel_body: &Vec3,
    true_gyro_body: &Vec3,
    r_bw: &RotationMatrix,
    g_w: &Vec3,
    det: &ImuDeterministicParams,
    bias_state: (&Vec3, &Vec3),
    noise_draw: (&Vec3, &Vec3),
) -> ImuSample {
    let ideal_accel = true_accel_body + r_bw.apply(g_w) + bias_state.0 + noise_draw.0;
    let ideal_gyro = true_gyro_body + bias_state.1 + noise_draw.1;
    ImuSample::new(
        t,
        det.corrupt_accel(&ideal_accel),
        det.corrupt_gyro(&ideal_gyro),
    )
}

/// Apply the calibrated deterministic correction h(v) = M S (v − b) to both
/// channels of a sample.
pub fn correct_deterministic(sample: &ImuSample, det: &ImuDeterministicParams) -> ImuSample {
    ImuSample::new(
        sample.t,
        det.correct_accel(&sample.accel),
        det.correct_gyro(&sample.gyro),
    )
}
