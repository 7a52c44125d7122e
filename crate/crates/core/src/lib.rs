//! Camera-IMU calibration toolkit.
//!
//! Implements the full calibration pipeline for a rigidly mounted
//! camera + IMU pair: pinhole intrinsics with radial/tangential distortion
//! (closed-form planar-target solve), IMU stochastic identification via Allan
//! variance, multi-position deterministic IMU calibration, IMU pre-integration
//! between camera frames, and robust extrinsic rotation estimation from
//! paired relative rotations (Huber-weighted quaternion constraints, SVD
//! null-space solve). A synthetic ground-truth generator makes every solver
//! testable by exact recovery.

pub mod camera;
pub mod extrinsics;
pub mod geometry;
pub mod imu;
pub mod io;
pub mod preintegration;
pub mod synthetic;

pub use camera::{CameraError, CameraIntrinsics, DistortionCoeffs, PlanarView};
pub use extrinsics::{ExtrinsicError, ExtrinsicResult, RelativeRotationPair, SolverConfig};
pub use geometry::{GeometryError, RotationMatrix, UnitQuaternion, Vec3};
pub use imu::{ImuDeterministicParams, ImuError, ImuNoiseParams, ImuSample};
pub use preintegration::{NavState, PreintegratedDelta};
pub use synthetic::{GroundTruth, TrajectorySpec};
