//! IMU models and calibration: measurement/bias models, continuous↔discrete
//! noise conversion, Allan-variance stochastic identification and
//! multi-position deterministic calibration.

mod allan;
mod deterministic;
mod model;
mod statics;

pub use allan::{
    allan_variance, default_cluster_sizes, fit_axis_noise, fit_noise_params, AllanCurve,
    AllanPoint, AxisNoiseFit, NoiseFitReport, SlopeFit,
};
pub use deterministic::{
    calibrate_accelerometer, calibrate_gyroscope, AccelCalibration, GyroCalibration,
};
pub use model::{
    apply_measurement_model, correct_deterministic, discretize_noise, propagate_bias, NoiseKind,
};
pub use statics::{
    detect_static_intervals, static_interval_stats, StaticDetectorConfig, StaticIntervalStats,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Mat3, Vec3};

/// Standard gravity used throughout unless overridden.
pub const STANDARD_GRAVITY: f64 = 9.81;

#[derive(Debug, Error)]
pub enum ImuError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("record too short: need at least {needed} samples, got {got}")]
    RecordTooShort { needed: usize, got: usize },
    #[error("no {regime} regime identifiable on {sensor} axis {axis}")]
    UnidentifiableRegime {
        sensor: String,
        axis: String,
        regime: String,
    },
    #[error("no static interval found in the recording")]
    NoStaticIntervals,
    #[error("need at least {needed} static orientations, got {got}")]
    NotEnoughOrientations { needed: usize, got: usize },
    #[error("unobservable parameters: {0}")]
    Observability(String),
    #[error("optimizer did not converge after {iterations} iterations (loss {final_loss:.3e})")]
    Convergence {
        iterations: usize,
        final_loss: f64,
        trace: Vec<f64>,
    },
    #[error("motion segment {segment} lacks a static neighbor on one side")]
    MissingStaticBracket { segment: usize },
}

/// One timestamped IMU measurement, SI units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImuSample {
    /// Seconds, strictly increasing within a recording.
    pub t: f64,
    /// m/s².
    pub accel: Vec3,
    /// rad/s.
    pub gyro: Vec3,
}

impl ImuSample {
    pub fn new(t: f64, accel: Vec3, gyro: Vec3) -> Self {
        Self { t, accel, gyro }
    }
}

/// Check a recording is finite with strictly increasing timestamps.
pub fn validate_recording(samples: &[ImuSample]) -> Result<(), ImuError> {
    for (i, s) in samples.iter().enumerate() {
        if !s.t.is_finite()
            || s.accel.iter().any(|v| !v.is_finite())
            || s.gyro.iter().any(|v| !v.is_finite())
        {
            return Err(ImuError::InvalidInput(format!(
                "sample {i} has non-finite values"
            )));
        }
        if i > 0 && s.t <= samples[i - 1].t {
            return Err(ImuError::InvalidInput(format!(
                "timestamps not strictly increasing at sample {i} ({} -> {})",
                samples[i - 1].t,
                s.t
            )));
        }
    }
    Ok(())
}

/// Continuous-time stochastic error model: white-noise densities (per √Hz)
/// and bias random walks, plus the optional accelerometer-bias time constant
/// (`None` = pure random walk).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImuNoiseParams {
    /// Accelerometer noise density, m/s²/√Hz.
    pub sigma_a: f64,
    /// Gyroscope noise density, rad/s/√Hz.
    pub sigma_w: f64,
    /// Accelerometer bias random walk, m/s³/√Hz.
    pub sigma_ba: f64,
    /// Gyroscope bias random walk, rad/s²/√Hz.
    pub sigma_bw: f64,
    /// Accelerometer bias time constant, seconds; `None` means infinite.
    pub tau: Option<f64>,
}

impl ImuNoiseParams {
    pub fn new(
        sigma_a: f64,
        sigma_w: f64,
        sigma_ba: f64,
        sigma_bw: f64,
        tau: Option<f64>,
    ) -> Result<Self, ImuError> {
        for (name, v) in [
            ("sigma_a", sigma_a),
            ("sigma_w", sigma_w),
            ("sigma_ba", sigma_ba),
            ("sigma_bw", sigma_bw),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(ImuError::InvalidInput(format!(
                    "{name} must be finite and non-negative, got {v}"
                )));
            }
        }
        if let Some(t) = tau {
            if !(t > 0.0) {
                return Err(ImuError::InvalidInput(format!(
                    "tau must be positive, got {t}"
                )));
            }
        }
        Ok(Self {
            sigma_a,
            sigma_w,
            sigma_ba,
            sigma_bw,
            tau,
        })
    }

    /// All-zero noise (ideal sensor), infinite bias time constant.
    pub fn zero() -> Self {
        Self {
            sigma_a: 0.0,
            sigma_w: 0.0,
            sigma_ba: 0.0,
            sigma_bw: 0.0,
            tau: None,
        }
    }
}

/// Deterministic error model: per-sensor bias b, diagonal scale S and
/// upper-unitriangular misalignment M, applied to a raw reading as
/// h(v) = M S (v − b).
///
/// Scale is stored as the diagonal, misalignment as the three upper entries
/// (xy, xz, yz), so the shape invariants hold by construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImuDeterministicParams {
    pub accel_bias: Vec3,
    pub gyro_bias: Vec3,
    pub accel_scale: Vec3,
    pub accel_misalign: Vec3,
    pub gyro_scale: Vec3,
    pub gyro_misalign: Vec3,
}

impl ImuDeterministicParams {
    pub fn identity() -> Self {
        Self {
            accel_bias: Vec3::zeros(),
            gyro_bias: Vec3::zeros(),
            accel_scale: Vec3::new(1.0, 1.0, 1.0),
            accel_misalign: Vec3::zeros(),
            gyro_scale: Vec3::new(1.0, 1.0, 1.0),
            gyro_misalign: Vec3::zeros(),
        }
    }

    pub fn validate(&self) -> Result<(), ImuError> {
        if self.accel_scale.iter().any(|&s| !(s > 0.0))
            || self.gyro_scale.iter().any(|&s| !(s > 0.0))
        {
            return Err(ImuError::InvalidInput(
                "scale diagonals must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn accel_scale_matrix(&self) -> Mat3 {
        Mat3::from_diagonal(&self.accel_scale)
    }

    pub fn gyro_scale_matrix(&self) -> Mat3 {
        Mat3::from_diagonal(&self.gyro_scale)
    }

    pub fn accel_misalign_matrix(&self) -> Mat3 {
        misalign_matrix(&self.accel_misalign)
    }

    pub fn gyro_misalign_matrix(&self) -> Mat3 {
        misalign_matrix(&self.gyro_misalign)
    }

    /// h(v) = M S (v − b) for the accelerometer.
    pub fn correct_accel(&self, v: &Vec3) -> Vec3 {
        self.accel_misalign_matrix() * (self.accel_scale_matrix() * (v - self.accel_bias))
    }

    /// h(v) = M S (v − b) for the gyroscope.
    pub fn correct_gyro(&self, v: &Vec3) -> Vec3 {
        self.gyro_misalign_matrix() * (self.gyro_scale_matrix() * (v - self.gyro_bias))
    }

    /// Inverse of `correct_accel`: maps an ideal reading to the raw one.
    pub fn corrupt_accel(&self, v: &Vec3) -> Vec3 {
        let m_inv = misalign_inverse(&self.accel_misalign);
        let s_inv = Mat3::from_diagonal(&self.accel_scale.map(|s| 1.0 / s));
        s_inv * (m_inv * v) + self.accel_bias
    }

    /// Inverse of `correct_gyro`.
    pub fn corrupt_gyro(&self, v: &Vec3) -> Vec3 {
        let m_inv = misalign_inverse(&self.gyro_misalign);
        let s_inv = Mat3::from_diagonal(&self.gyro_scale.map(|s| 1.0 / s));
        s_inv * (m_inv * v) + self.gyro_bias
    }
}

/// Upper-unitriangular misalignment from its (xy, xz, yz) entries.
fn misalign_matrix(m: &Vec3) -> Mat3 {
    Mat3::new(
        1.0, m.x, m.y, //
        0.0, 1.0, m.z, //
        0.0, 0.0, 1.0,
    )
}

/// Closed-form inverse of the upper-unitriangular misalignment.
fn misalign_inverse(m: &Vec3) -> Mat3 {
    Mat3::new(1.0, -m.x, m.x * m.z - m.y, 0.0, 1.0, -m.z, 0.0, 0.0, 1.0)
}
