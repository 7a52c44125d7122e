//! Sample emission: IMU streams, camera pose/view streams, intrinsics view
//! sets and multi-position calibration recordings, all seeded with
//! independent substreams per noise source.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{GroundTruth, SyntheticError, Trajectory, TrajectorySpec};
use crate::camera::{
    world_to_pixel, CameraIntrinsics, Correspondence, DistortionCoeffs, Pixel, PlanarView,
    TargetPoint,
};
use crate::extrinsics::StampedPose;
use crate::geometry::{RotationMatrix, UnitQuaternion, Vec3};
use crate::imu::{
    apply_measurement_model, propagate_bias, ImuDeterministicParams, ImuNoiseParams, ImuSample,
};

/// Substream ids of the seeded generator; adding camera noise never perturbs
/// the IMU streams.
const STREAM_ACCEL_WHITE: u64 = 0;
const STREAM_GYRO_WHITE: u64 = 1;
const STREAM_ACCEL_WALK: u64 = 2;
const STREAM_GYRO_WALK: u64 = 3;
const STREAM_PIXEL: u64 = 4;
const STREAM_VIEW_POSE: u64 = 5;
const STREAM_ORIENTATIONS: u64 = 6;

fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn draw3(rng: &mut ChaCha8Rng) -> Vec3 {
    Vec3::new(
        StandardNormal.sample(rng),
        StandardNormal.sample(rng),
        StandardNormal.sample(rng),
    )
}

/// Emit the IMU stream of a trajectory: exact analytic kinematics plus
/// gravity, random-walk biases, white noise and deterministic corruption.
pub fn emit_imu(
    traj: &Trajectory,
    gravity: f64,
    det: &ImuDeterministicParams,
    noise: &ImuNoiseParams,
    seed: u64,
) -> Vec<ImuSample> {
    let spec = traj.spec();
    let dt = 1.0 / spec.imu_rate;
    let n = (spec.duration * spec.imu_rate).round() as usize;
    let g_w = Vec3::new(0.0, 0.0, gravity);

    let mut accel_white = substream(seed, STREAM_ACCEL_WHITE);
    let mut gyro_white = substream(seed, STREAM_GYRO_WHITE);
    let mut accel_walk = substream(seed, STREAM_ACCEL_WALK);
    let mut gyro_walk = substream(seed, STREAM_GYRO_WALK);

    let sd_a = noise.sigma_a / dt.sqrt();
    let sd_w = noise.sigma_w / dt.sqrt();

    let mut b_a = Vec3::zeros();
    let mut b_w = Vec3::zeros();
    let mut out = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let t = k as f64 * dt;
        let q_wb = traj.attitude(t);
        let r_bw = q_wb.conjugate().to_rotation();
        let a_body = r_bw.apply(&traj.acceleration(t));
        let w_body = traj.angular_rate_body(t);

        let n_a = sd_a * draw3(&mut accel_white);
        let n_w = sd_w * draw3(&mut gyro_white);
        out.push(apply_measurement_model(
            t,
            &a_body,
            &w_body,
            &r_bw,
            &g_w,
            det,
            (&b_a, &b_w),
            (&n_a, &n_w),
        ));

        let (na, nw) = propagate_bias(
            &b_a,
            &b_w,
            dt,
            noise,
            (&draw3(&mut accel_walk), &draw3(&mut gyro_walk)),
        )
        .expect("dt > 0");
        b_a = na;
        b_w = nw;
    }
    out
}

/// Planar calibration target: a rows×cols grid of `spacing`-metre cells
/// posed in the world by (q_wt, p_wt); target-frame points lie on Z = 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetConfig {
    pub rows: usize,
    pub cols: usize,
    pub spacing: f64,
    pub q_wt: UnitQuaternion,
    pub p_wt: Vec3,
}

impl TargetConfig {
    /// Place the target on the camera's initial optical axis at `distance`,
    /// plane-parallel to the initial image plane and centred on the axis.
    pub fn facing_camera(
        traj: &Trajectory,
        extrinsic: (&RotationMatrix, &Vec3),
        rows: usize,
        cols: usize,
        spacing: f64,
        distance: f64,
    ) -> Self {
        let (r_bc, t_bc) = extrinsic;
        let q_wb0 = traj.attitude(0.0);
        let q_wc0 = q_wb0 * r_bc.to_quaternion();
        let p_wc0 = traj.position(0.0) + q_wb0.to_rotation().apply(t_bc);
        let boresight = q_wc0.rotate(&Vec3::z());
        let center_w = p_wc0 + distance * boresight;
        let center_t = Vec3::new(
            spacing * (cols - 1) as f64 * 0.5,
            spacing * (rows - 1) as f64 * 0.5,
            0.0,
        );
        TargetConfig {
            rows,
            cols,
            spacing,
            q_wt: q_wc0,
            p_wt: center_w - q_wc0.rotate(&center_t),
        }
    }

    pub fn target_points(&self) -> Vec<TargetPoint> {
        let mut pts = Vec::with_capacity(self.rows * self.cols);
        for r in 0..self.rows {
            for c in 0..self.cols {
                pts.push(TargetPoint::new(
                    c as f64 * self.spacing,
                    r as f64 * self.spacing,
                ));
            }
        }
        pts
    }

    pub fn world_point(&self, tp: &TargetPoint) -> Vec3 {
        self.q_wt.rotate(&Vec3::new(tp.x, tp.y, 0.0)) + self.p_wt
    }
}

/// Camera-side outputs of a trajectory.
#[derive(Debug, Clone)]
pub struct CameraStreams {
    /// Camera-to-world poses at the emitted frames.
    pub poses: Vec<StampedPose>,
    /// Target observations; `view_id` indexes into `poses`.
    pub views: Vec<PlanarView>,
    /// Frames dropped because the target left the image or the frustum.
    pub dropped: usize,
    /// Nav state of the IMU at each emitted frame.
    pub frame_states: Vec<(f64, crate::preintegration::NavState)>,
}

impl CameraStreams {
    /// Fraction of frames in which the whole target stayed visible. The
    /// generators expect this to stay at or above 0.9; lower values mean the
    /// trajectory swings the target out of frame.
    pub fn visibility_fraction(&self) -> f64 {
        let total = self.poses.len() + self.dropped;
        if total == 0 {
            return 0.0;
        }
        self.poses.len() as f64 / total as f64
    }
}

/// Emit camera poses and planar views along the trajectory through the true
/// extrinsic. Frames where any corner leaves the image (or the target goes
/// behind the camera) are dropped and counted.
#[allow(clippy::too_many_arguments)]
pub fn emit_camera(
    traj: &Trajectory,
    extrinsic: (&RotationMatrix, &Vec3),
    intr: &CameraIntrinsics,
    dist: &DistortionCoeffs,
    target: &TargetConfig,
    image_size: (f64, f64),
    pixel_noise: f64,
    seed: u64,
) -> CameraStreams {
    let (r_bc, t_bc) = extrinsic;
    let q_bc = r_bc.to_quaternion();
    let spec = traj.spec();
    let n_frames = (spec.duration * spec.cam_rate).floor() as usize;
    let mut pixel_rng = substream(seed, STREAM_PIXEL);

    let target_pts = target.target_points();
    let mut poses = Vec::new();
    let mut views = Vec::new();
    let mut frame_states = Vec::new();
    let mut dropped = 0;

    for k in 0..=n_frames {
        let t = k as f64 / spec.cam_rate;
        if t > spec.duration {
            break;
        }
        let q_wb = traj.attitude(t);
        let p_wb = traj.position(t);
        let q_wc = q_wb * q_bc;
        let p_wc = p_wb + q_wb.to_rotation().apply(t_bc);

        // world -> camera for projection
        let rot_cw = q_wc.conjugate().to_rotation();
        let t_cw = -rot_cw.apply(&p_wc);

        let mut points = Vec::with_capacity(target_pts.len());
        let mut visible = true;
        for tp in &target_pts {
            let p_w = target.world_point(tp);
            match world_to_pixel(&p_w, &rot_cw, &t_cw, intr, dist) {
                Ok(mut px) => {
                    if px.x < 0.0 || px.x > image_size.0 || px.y < 0.0 || px.y > image_size.1 {
                        visible = false;
                        break;
                    }
                    if pixel_noise > 0.0 {
                        let jitter: f64 = StandardNormal.sample(&mut pixel_rng);
                        let jitter2: f64 = StandardNormal.sample(&mut pixel_rng);
                        px += Pixel::new(pixel_noise * jitter, pixel_noise * jitter2);
                    }
                    points.push(Correspondence {
                        target: *tp,
                        pixel: px,
                    });
                }
                Err(_) => {
                    visible = false;
                    break;
                }
            }
        }

        if !visible {
            dropped += 1;
            continue;
        }
        let view_id = poses.len() as u64;
        poses.push(StampedPose {
            t,
            q: q_wc.canonicalized(),
            trans: p_wc,
        });
        views.push(PlanarView::new(view_id, points));
        frame_states.push((t, traj.nav_state(t)));
    }

    CameraStreams {
        poses,
        views,
        dropped,
        frame_states,
    }
}

/// Grid shape for standalone intrinsics view sets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub rows: usize,
    pub cols: usize,
    pub spacing: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            rows: 6,
            cols: 6,
            spacing: 0.03,
        }
    }
}

/// Generate well-spread tilted views of a planar grid for the closed-form
/// intrinsics solve: golden-angle tilt azimuths, seeded jitter, every corner
/// kept inside the image.
pub fn planar_views_for_intrinsics(
    intr: &CameraIntrinsics,
    dist: &DistortionCoeffs,
    grid: &GridSpec,
    n_views: usize,
    image_size: (f64, f64),
    pixel_noise: f64,
    seed: u64,
) -> Vec<PlanarView> {
    let mut pose_rng = substream(seed, STREAM_VIEW_POSE);
    let mut pixel_rng = substream(seed, STREAM_PIXEL);
    let golden = std::f64::consts::PI * (3.0 - 5.0_f64.sqrt());

    let width = grid.spacing * (grid.cols - 1) as f64;
    let height = grid.spacing * (grid.rows - 1) as f64;

    let mut views = Vec::with_capacity(n_views);
    let mut attempt = 0usize;
    while views.len() < n_views {
        let i = attempt;
        attempt += 1;
        let az = i as f64 * golden + pose_rng.gen_range(-0.1..0.1);
        let tilt = 0.30 + 0.35 * ((i % 3) as f64 / 2.0) + pose_rng.gen_range(-0.05..0.05);
        let roll = 0.6 * (i as f64 * 1.3).sin() + pose_rng.gen_range(-0.1..0.1);
        let axis = Vec3::new(az.cos(), az.sin(), 0.0);
        let rot = RotationMatrix::rot_z(roll)
            * UnitQuaternion::from_axis_angle(&axis, tilt)
                .unwrap()
                .to_rotation();
        let distance = 0.45 + 0.1 * (i as f64 * 0.7).sin() + pose_rng.gen_range(-0.02..0.02);
        let t = Vec3::new(-width * 0.5 + 0.01, -height * 0.5 + 0.01, distance);

        let mut points = Vec::with_capacity(grid.rows * grid.cols);
        let mut ok = true;
        for r in 0..grid.rows {
            for c in 0..grid.cols {
                let tp = TargetPoint::new(c as f64 * grid.spacing, r as f64 * grid.spacing);
                let p_w = Vec3::new(tp.x, tp.y, 0.0);
                match world_to_pixel(&p_w, &rot, &t, intr, dist) {
                    Ok(mut px) => {
                        if px.x < 0.0 || px.x > image_size.0 || px.y < 0.0 || px.y > image_size.1 {
                            ok = false;
                        }
                        if pixel_noise > 0.0 {
                            let j1: f64 = StandardNormal.sample(&mut pixel_rng);
                            let j2: f64 = StandardNormal.sample(&mut pixel_rng);
                            px += Pixel::new(pixel_noise * j1, pixel_noise * j2);
                        }
                        points.push(Correspondence {
                            target: tp,
                            pixel: px,
                        });
                    }
                    Err(_) => {
                        ok = false;
                    }
                }
                if !ok {
                    break;
                }
            }
            if !ok {
                break;
            }
        }
        if ok {
            views.push(PlanarView::new(views.len() as u64, points));
        }
        assert!(
            attempt < 20 * n_views.max(4),
            "could not keep the target in view; check intrinsics/grid configuration"
        );
    }
    views
}

/// Shape of a multi-position deterministic-calibration recording.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MultiPositionConfig {
    pub n_orientations: usize,
    /// Initial static hold, seconds.
    pub initial_static: f64,
    /// Static hold between rotations, seconds.
    pub static_duration: f64,
    /// Rotation duration between holds, seconds.
    pub motion_duration: f64,
    pub rate: f64,
}

impl Default for MultiPositionConfig {
    fn default() -> Self {
        Self {
            n_orientations: 24,
            initial_static: 5.0,
            static_duration: 1.5,
            motion_duration: 2.0,
            rate: 200.0,
        }
    }
}

/// A multi-position recording plus its ground-truth labels.
#[derive(Debug, Clone)]
pub struct MultiPositionRecording {
    pub samples: Vec<ImuSample>,
    pub static_intervals: Vec<(f64, f64)>,
    /// Attitude held during each static interval (body-to-world).
    pub orientations: Vec<UnitQuaternion>,
}

/// Rotate-and-hold recording spanning attitude space: golden-spiral gravity
/// directions with varying roll, smooth sinusoidal angular-speed profiles
/// between holds, rotations about the body's own centre.
pub fn generate_multiposition(
    det: &ImuDeterministicParams,
    gravity: f64,
    config: &MultiPositionConfig,
    seed: u64,
) -> MultiPositionRecording {
    let mut rng = substream(seed, STREAM_ORIENTATIONS);
    let golden = std::f64::consts::PI * (3.0 - 5.0_f64.sqrt());
    let n = config.n_orientations;
    let g_w = Vec3::new(0.0, 0.0, gravity);
    let dt = 1.0 / config.rate;

    // target attitudes: tilt the body z into a spread of directions, add roll
    let orientations: Vec<UnitQuaternion> = (0..n)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let tilt = z.clamp(-1.0, 1.0).acos();
            let az = i as f64 * golden + rng.gen_range(-0.05..0.05);
            let axis = Vec3::new(-az.sin(), az.cos(), 0.0);
            let tilt_q = if tilt.abs() < 1e-12 {
                UnitQuaternion::identity()
            } else {
                UnitQuaternion::from_axis_angle(&axis, tilt).unwrap()
            };
            let roll = UnitQuaternion::from_axis_angle(
                &Vec3::z(),
                i as f64 * 1.3 + rng.gen_range(-0.1..0.1),
            )
            .unwrap();
            tilt_q * roll
        })
        .collect();

    let mut samples = Vec::new();
    let mut static_intervals = Vec::new();
    let mut t = 0.0;
    let zero = Vec3::zeros();

    let emit_static = |q_wb: &UnitQuaternion, dur: f64, t: &mut f64, out: &mut Vec<ImuSample>| {
        let start = *t;
        let steps = (dur * config.rate).round() as usize;
        let r_bw = q_wb.conjugate().to_rotation();
        for _ in 0..steps {
            out.push(apply_measurement_model(
                *t,
                &zero,
                &zero,
                &r_bw,
                &g_w,
                det,
                (&zero, &zero),
                (&zero, &zero),
            ));
            *t += dt;
        }
        (start, *t - dt)
    };

    // initial hold at the first orientation
    let iv = emit_static(
        &orientations[0],
        config.initial_static,
        &mut t,
        &mut samples,
    );
    static_intervals.push(iv);

    for k in 1..n {
        // smooth geodesic rotation from k-1 to k about a fixed body axis
        let q_rel = (orientations[k - 1].conjugate() * orientations[k]).canonicalized();
        let total_angle = q_rel.angle();
        let axis = {
            let v = Vec3::new(q_rel.x, q_rel.y, q_rel.z);
            if v.norm() > 1e-12 {
                v / v.norm()
            } else {
                Vec3::x()
            }
        };
        let steps = (config.motion_duration * config.rate).round() as usize;
        for s in 0..steps {
            let tau = s as f64 / steps as f64;
            // θ(τ) = Δθ (τ − sin(2πτ)/2π): rate is zero at both ends
            let theta =
                total_angle * (tau - (std::f64::consts::TAU * tau).sin() / std::f64::consts::TAU);
            let theta_dot =
                total_angle * (1.0 - (std::f64::consts::TAU * tau).cos()) / config.motion_duration;
            let q_wb = orientations[k - 1] * UnitQuaternion::from_rotation_vector(&(axis * theta));
            let r_bw = q_wb.conjugate().to_rotation();
            let w_body = axis * theta_dot;
            samples.push(apply_measurement_model(
                t,
                &zero,
                &w_body,
                &r_bw,
                &g_w,
                det,
                (&zero, &zero),
                (&zero, &zero),
            ));
            t += dt;
        }
        let iv = emit_static(
            &orientations[k],
            config.static_duration,
            &mut t,
            &mut samples,
        );
        static_intervals.push(iv);
    }

    MultiPositionRecording {
        samples,
        static_intervals,
        orientations,
    }
}

/// Everything one `simulate` run produces.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub imu: Vec<ImuSample>,
    pub cam_poses: Vec<StampedPose>,
    pub views: Vec<PlanarView>,
    pub intrinsic_views: Vec<PlanarView>,
    pub ground_truth: GroundTruth,
    /// Fraction of camera frames with the full target in view.
    pub visibility_fraction: f64,
}

/// Full simulation configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub trajectory: TrajectorySpec,
    pub r_bc: RotationMatrix,
    pub t_bc: Vec3,
    pub intrinsics: CameraIntrinsics,
    pub distortion: DistortionCoeffs,
    pub imu_det: ImuDeterministicParams,
    pub imu_noise: ImuNoiseParams,
    pub gravity: f64,
    pub grid: GridSpec,
    /// Distance from the initial camera pose to the target, metres.
    pub target_distance: f64,
    pub image_size: (f64, f64),
    pub pixel_noise: f64,
    /// Standalone tilted views for the intrinsics solve.
    pub n_intrinsic_views: usize,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            trajectory: TrajectorySpec::default(),
            r_bc: RotationMatrix::identity(),
            t_bc: Vec3::zeros(),
            intrinsics: CameraIntrinsics {
                fx: 1091.635505127837,
                fy: 1094.097509334247,
                cx: 615.7646844724167,
                cy: 336.08607722962415,
                skew: 0.0,
            },
            distortion: DistortionCoeffs::zero(),
            imu_det: ImuDeterministicParams::identity(),
            imu_noise: ImuNoiseParams::zero(),
            gravity: crate::imu::STANDARD_GRAVITY,
            grid: GridSpec::default(),
            target_distance: 1.4,
            image_size: (1280.0, 720.0),
            pixel_noise: 0.0,
            n_intrinsic_views: 12,
        }
    }
}

/// Generate a complete dataset: IMU stream, camera poses + views along the
/// trajectory, a standalone intrinsics view set and the ground truth.
pub fn generate_dataset(config: &DatasetConfig) -> Result<Dataset, SyntheticError> {
    let traj = Trajectory::new(config.trajectory)?;
    let seed = config.trajectory.seed;

    let imu = emit_imu(
        &traj,
        config.gravity,
        &config.imu_det,
        &config.imu_noise,
        seed,
    );

    let target = TargetConfig::facing_camera(
        &traj,
        (&config.r_bc, &config.t_bc),
        config.grid.rows,
        config.grid.cols,
        config.grid.spacing,
        config.target_distance,
    );
    let cam = emit_camera(
        &traj,
        (&config.r_bc, &config.t_bc),
        &config.intrinsics,
        &config.distortion,
        &target,
        config.image_size,
        config.pixel_noise,
        seed,
    );

    let intrinsic_views = planar_views_for_intrinsics(
        &config.intrinsics,
        &config.distortion,
        &config.grid,
        config.n_intrinsic_views,
        config.image_size,
        config.pixel_noise,
        seed,
    );

    let ground_truth = GroundTruth {
        q_bc: config.r_bc.to_quaternion(),
        r_bc: config.r_bc,
        t_bc: config.t_bc,
        intrinsics: config.intrinsics,
        distortion: config.distortion,
        imu_det: config.imu_det,
        imu_noise: config.imu_noise,
        gravity: config.gravity,
        frame_states: cam.frame_states.clone(),
        static_intervals: Vec::new(),
    };

    let visibility_fraction = cam.visibility_fraction();
    Ok(Dataset {
        imu,
        cam_poses: cam.poses,
        views: cam.views,
        intrinsic_views,
        ground_truth,
        visibility_fraction,
    })
}
