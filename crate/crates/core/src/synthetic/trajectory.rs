//! Smooth sum-of-sinusoids rig trajectories with exact analytic derivatives,
//! so emitted IMU kinematics are drift-free by construction.

use super::{SyntheticError, TrajectorySpec};
use crate::geometry::{RotationMatrix, UnitQuaternion, Vec3};
use crate::preintegration::NavState;

/// Fixed per-axis phases keep the three sinusoids out of lockstep.
const TRANS_PHASE: [f64; 3] = [0.0, 1.1, 2.3];
const ROT_PHASE: [f64; 3] = [0.4, 1.7, 2.9];

/// Continuous pose function built from a `TrajectorySpec`.
#[derive(Debug, Clone)]
pub struct Trajectory {
    spec: TrajectorySpec,
}

impl Trajectory {
    pub fn new(spec: TrajectorySpec) -> Result<Self, SyntheticError> {
        spec.validate()?;
        Ok(Self { spec })
    }

    pub fn spec(&self) -> &TrajectorySpec {
        &self.spec
    }

    pub fn position(&self, t: f64) -> Vec3 {
        self.trans_component(t, 0)
    }

    pub fn velocity(&self, t: f64) -> Vec3 {
        self.trans_component(t, 1)
    }

    pub fn acceleration(&self, t: f64) -> Vec3 {
        self.trans_component(t, 2)
    }

    /// nth time derivative of the position sinusoids.
    fn trans_component(&self, t: f64, order: u32) -> Vec3 {
        let mut out = Vec3::zeros();
        for i in 0..3 {
            let w = std::f64::consts::TAU * self.spec.trans_freq[i];
            let phase = w * t + TRANS_PHASE[i];
            let amp = self.spec.trans_amp[i] * w.powi(order as i32);
            out[i] = amp
                * match order % 4 {
                    0 => phase.sin(),
                    1 => phase.cos(),
                    2 => -phase.sin(),
                    _ => -phase.cos(),
                };
        }
        out
    }

    /// Euler angles (roll about x, pitch about y, yaw about z) and their rates.
    fn euler_and_rates(&self, t: f64) -> ([f64; 3], [f64; 3]) {
        let mut angles = [0.0; 3];
        let mut rates = [0.0; 3];
        for i in 0..3 {
            let w = std::f64::consts::TAU * self.spec.rot_freq[i];
            let phase = w * t + ROT_PHASE[i];
            angles[i] = self.spec.rot_amp[i] * phase.sin();
            rates[i] = self.spec.rot_amp[i] * w * phase.cos();
        }
        (angles, rates)
    }

    /// Body-to-world attitude, R_wb = Rz(yaw) Ry(pitch) Rx(roll).
    pub fn attitude(&self, t: f64) -> UnitQuaternion {
        let ([roll, pitch, yaw], _) = self.euler_and_rates(t);
        let qx = UnitQuaternion::from_axis_angle(&Vec3::x(), roll).unwrap();
        let qy = UnitQuaternion::from_axis_angle(&Vec3::y(), pitch).unwrap();
        let qz = UnitQuaternion::from_axis_angle(&Vec3::z(), yaw).unwrap();
        qz * qy * qx
    }

    /// Body-frame angular rate from the Euler-angle rates:
    /// ω = [φ̇ − ψ̇ sinθ; θ̇ cosφ + ψ̇ cosθ sinφ; −θ̇ sinφ + ψ̇ cosθ cosφ].
    pub fn angular_rate_body(&self, t: f64) -> Vec3 {
        let ([roll, pitch, _], [roll_d, pitch_d, yaw_d]) = self.euler_and_rates(t);
        let (sr, cr) = roll.sin_cos();
        let (sp, cp) = pitch.sin_cos();
        Vec3::new(
            roll_d - yaw_d * sp,
            pitch_d * cr + yaw_d * cp * sr,
            -pitch_d * sr + yaw_d * cp * cr,
        )
    }

    pub fn rotation(&self, t: f64) -> RotationMatrix {
        self.attitude(t).to_rotation()
    }

    pub fn nav_state(&self, t: f64) -> NavState {
        NavState {
            p: self.position(t),
            v: self.velocity(t),
            q: self.attitude(t),
        }
    }

    /// Body-frame specific force: f = R_bw (a_w + g_w). A stationary level
    /// body reads exactly +g_w.
    pub fn specific_force(&self, t: f64, g_w: &Vec3) -> Vec3 {
        self.attitude(t)
            .rotate_inverse(&(self.acceleration(t) + g_w))
    }
}
