//! Run configuration: a plain key=value file plus flag overrides; flags win.
//! Unknown keys are rejected.

use std::path::Path;

use anyhow::{bail, Context, Result};
use camimu_core::extrinsics::PoseConvention;
use camimu_core::geometry::Vec3;

#[derive(Debug, Clone)]
pub struct RunConfig {
    // extrinsic solver
    pub r_thr_deg: f64,
    pub min_rotation_deg: f64,
    pub max_rounds: usize,
    pub sv_ratio_threshold: f64,
    pub pose_convention: PoseConvention,
    // physics
    pub gravity: f64,
    // Allan grid
    pub allan_points_per_decade: usize,
    pub allan_tau_min: f64,
    pub allan_tau_max: f64,
    // static detector
    pub static_window: f64,
    pub static_threshold_factor: f64,
    // simulation
    pub seed: u64,
    pub sim_duration: f64,
    pub sim_imu_rate: f64,
    pub sim_cam_rate: f64,
    pub sim_pixel_noise: f64,
    pub sim_sigma_a: f64,
    pub sim_sigma_w: f64,
    pub sim_sigma_ba: f64,
    pub sim_sigma_bw: f64,
    pub sim_k1: f64,
    pub sim_k2: f64,
    pub sim_p1: f64,
    pub sim_p2: f64,
    pub sim_orientations: usize,
    pub sim_trans_amp: Vec3,
    pub sim_rot_amp: Vec3,
}

impl Default for RunConfig {
    fn default() -> Self {
        let traj = camimu_core::TrajectorySpec::default();
        Self {
            r_thr_deg: 5.0,
            min_rotation_deg: 0.5,
            max_rounds: 10,
            sv_ratio_threshold: 100.0,
            pose_convention: PoseConvention::CamToWorld,
            gravity: camimu_core::imu::STANDARD_GRAVITY,
            allan_points_per_decade: 20,
            allan_tau_min: 0.0,
            allan_tau_max: f64::INFINITY,
            static_window: 1.0,
            static_threshold_factor: 10.0,
            seed: 42,
            sim_duration: traj.duration,
            sim_imu_rate: traj.imu_rate,
            sim_cam_rate: traj.cam_rate,
            sim_pixel_noise: 0.0,
            sim_sigma_a: 0.0,
            sim_sigma_w: 0.0,
            sim_sigma_ba: 0.0,
            sim_sigma_bw: 0.0,
            sim_k1: 0.0,
            sim_k2: 0.0,
            sim_p1: 0.0,
            sim_p2: 0.0,
            sim_orientations: 24,
            sim_trans_amp: traj.trans_amp,
            sim_rot_amp: traj.rot_amp,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut config = Self::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .with_context(|| format!("{}:{}: expected key=value", path.display(), idx + 1))?;
            config
                .set(key.trim(), value.trim())
                .with_context(|| format!("{}:{}", path.display(), idx + 1))?;
        }
        config.validate()?;
        Ok(config)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn f(value: &str) -> Result<f64> {
            Ok(value.parse::<f64>()?)
        }
        match key {
            "r_thr_deg" => self.r_thr_deg = f(value)?,
            "min_rotation_deg" => self.min_rotation_deg = f(value)?,
            "max_rounds" => self.max_rounds = value.parse()?,
            "sv_ratio_threshold" => self.sv_ratio_threshold = f(value)?,
            "pose_convention" => self.pose_convention = parse_convention(value)?,
            "gravity" => self.gravity = f(value)?,
            "allan_points_per_decade" => self.allan_points_per_decade = value.parse()?,
            "allan_tau_min" => self.allan_tau_min = f(value)?,
            "allan_tau_max" => self.allan_tau_max = f(value)?,
            "static_window" => self.static_window = f(value)?,
            "static_threshold_factor" => self.static_threshold_factor = f(value)?,
            "seed" => self.seed = value.parse()?,
            "sim_duration" => self.sim_duration = f(value)?,
            "sim_imu_rate" => self.sim_imu_rate = f(value)?,
            "sim_cam_rate" => self.sim_cam_rate = f(value)?,
            "sim_pixel_noise" => self.sim_pixel_noise = f(value)?,
            "sim_sigma_a" => self.sim_sigma_a = f(value)?,
            "sim_sigma_w" => self.sim_sigma_w = f(value)?,
            "sim_sigma_ba" => self.sim_sigma_ba = f(value)?,
            "sim_sigma_bw" => self.sim_sigma_bw = f(value)?,
            "sim_k1" => self.sim_k1 = f(value)?,
            "sim_k2" => self.sim_k2 = f(value)?,
            "sim_p1" => self.sim_p1 = f(value)?,
            "sim_p2" => self.sim_p2 = f(value)?,
            "sim_orientations" => self.sim_orientations = value.parse()?,
            "sim_trans_amp_x" => self.sim_trans_amp.x = f(value)?,
            "sim_trans_amp_y" => self.sim_trans_amp.y = f(value)?,
            "sim_trans_amp_z" => self.sim_trans_amp.z = f(value)?,
            "sim_rot_amp_x" => self.sim_rot_amp.x = f(value)?,
            "sim_rot_amp_y" => self.sim_rot_amp.y = f(value)?,
            "sim_rot_amp_z" => self.sim_rot_amp.z = f(value)?,
            other => bail!("unknown config key {other:?}"),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r_thr_deg > 0.0) {
            bail!("r_thr_deg must be positive");
        }
        if !(self.gravity > 0.0) {
            bail!("gravity must be positive");
        }
        if self.min_rotation_deg < 0.0 {
            bail!("min_rotation_deg must be non-negative");
        }
        if self.allan_points_per_decade == 0 {
            bail!("allan_points_per_decade must be at least 1");
        }
        Ok(())
    }

    pub fn solver_config(&self) -> camimu_core::SolverConfig {
        camimu_core::SolverConfig {
            r_thr: self.r_thr_deg.to_radians(),
            max_rounds: self.max_rounds,
            min_rotation: self.min_rotation_deg.to_radians(),
            sv_ratio_threshold: self.sv_ratio_threshold,
            rotation_change_tol: 0.01_f64.to_radians(),
        }
    }
}

pub fn parse_convention(value: &str) -> Result<PoseConvention> {
    match value {
        "c2w" => Ok(PoseConvention::CamToWorld),
        "w2c" => Ok(PoseConvention::WorldToCam),
        other => bail!("pose convention must be c2w or w2c, got {other:?}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_rejects() {
        let dir = std::env::temp_dir().join("camimu_cfg_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("ok.cfg");
        std::fs::write(&path, "# comment\nr_thr_deg = 4.0\nseed=7\n").unwrap();
        let cfg = RunConfig::load(&path).unwrap();
        assert_eq!(cfg.r_thr_deg, 4.0);
        assert_eq!(cfg.seed, 7);

        let bad = dir.join("bad.cfg");
        std::fs::write(&bad, "no_such_key = 1\n").unwrap();
        assert!(RunConfig::load(&bad).is_err());

        let invalid = dir.join("invalid.cfg");
        std::fs::write(&invalid, "r_thr_deg = -3\n").unwrap();
        assert!(RunConfig::load(&invalid).is_err());
    }
}
