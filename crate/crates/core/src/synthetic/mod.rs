//! Ground-truth-consistent synthetic data: smooth rig trajectories, exact
//! IMU samples with configurable corruption, camera poses through a chosen
//! extrinsic, planar-target projections and multi-position calibration
//! recordings. Every solver in the toolkit is testable by exact recovery
//! against the emitted `GroundTruth`.

mod emit;
mod trajectory;

pub use emit::{
    emit_camera, emit_imu, generate_dataset, generate_multiposition, planar_views_for_intrinsics,
    CameraStreams, Dataset, DatasetConfig, GridSpec, MultiPositionConfig, MultiPositionRecording,
    TargetConfig,
};
pub use trajectory::Trajectory;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::{CameraIntrinsics, DistortionCoeffs};
use crate::geometry::{RotationMatrix, UnitQuaternion, Vec3};
use crate::imu::{ImuDeterministicParams, ImuNoiseParams};
use crate::preintegration::NavState;

#[derive(Debug, Error)]
pub enum SyntheticError {
    #[error("invalid trajectory spec: {0}")]
    InvalidSpec(String),
}

/// Sum-of-sinusoids trajectory parameters. Deterministic given the seed; the
/// seed drives only noise substreams, never the smooth motion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySpec {
    /// Seconds.
    pub duration: f64,
    /// Hz.
    pub imu_rate: f64,
    /// Hz; must not exceed `imu_rate`.
    pub cam_rate: f64,
    /// Metres, per world axis.
    pub trans_amp: Vec3,
    /// Hz, per world axis.
    pub trans_freq: Vec3,
    /// Radians, per Euler axis (roll, pitch, yaw).
    pub rot_amp: Vec3,
    /// Hz, per Euler axis.
    pub rot_freq: Vec3,
    pub seed: u64,
}

impl TrajectorySpec {
    pub fn validate(&self) -> Result<(), SyntheticError> {
        if !(self.duration > 0.0) {
            return Err(SyntheticError::InvalidSpec(format!(
                "duration must be positive, got {}",
                self.duration
            )));
        }
        if !(self.imu_rate > 0.0 && self.cam_rate > 0.0) {
            return Err(SyntheticError::InvalidSpec("rates must be positive".into()));
        }
        if self.imu_rate < self.cam_rate {
            return Err(SyntheticError::InvalidSpec(format!(
                "imu_rate {} must be at least cam_rate {}",
                self.imu_rate, self.cam_rate
            )));
        }
        for v in [self.trans_amp, self.trans_freq, self.rot_amp, self.rot_freq] {
            if v.iter().any(|x| !x.is_finite()) {
                return Err(SyntheticError::InvalidSpec(
                    "amplitudes and frequencies must be finite".into(),
                ));
            }
        }
        Ok(())
    }
}

impl Default for TrajectorySpec {
    /// Desk-scale excitation about all three axes.
    fn default() -> Self {
        Self {
            duration: 30.0,
            imu_rate: 200.0,
            cam_rate: 10.0,
            trans_amp: Vec3::new(0.1, 0.08, 0.08),
            trans_freq: Vec3::new(0.4, 0.5, 0.3),
            rot_amp: Vec3::new(0.12, 0.1, 0.3),
            rot_freq: Vec3::new(0.35, 0.45, 0.25),
            seed: 42,
        }
    }
}

/// Everything the generators injected, for recovery scoring.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundTruth {
    pub q_bc: UnitQuaternion,
    pub r_bc: RotationMatrix,
    pub t_bc: Vec3,
    pub intrinsics: CameraIntrinsics,
    pub distortion: DistortionCoeffs,
    pub imu_det: ImuDeterministicParams,
    pub imu_noise: ImuNoiseParams,
    pub gravity: f64,
    /// Nav state at each emitted camera frame time.
    pub frame_states: Vec<(f64, NavState)>,
    /// True static intervals of the recording, when applicable.
    pub static_intervals: Vec<(f64, f64)>,
}
