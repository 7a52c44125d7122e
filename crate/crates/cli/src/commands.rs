//! Subcommand implementations. Exit codes: 0 success (possibly flagged),
//! 1 input/IO error, 2 insufficient or degenerate data, 3 numerical
//! non-convergence.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use camimu_core::camera::{calibrate_camera, CameraError};
use camimu_core::extrinsics::{
    pair_from_camera_poses, solve_rotation, solve_translation, PoseConvention,
};
use camimu_core::geometry::{Mat3, RotationMatrix, Vec3};
use camimu_core::imu::{
    allan_variance, calibrate_accelerometer, calibrate_gyroscope, default_cluster_sizes,
    detect_static_intervals, fit_noise_params, static_interval_stats, AllanCurve,
    ImuDeterministicParams, ImuError, ImuNoiseParams, ImuSample, StaticDetectorConfig,
};
use camimu_core::io::{
    read_frame_csv, read_imu_csv, read_pose_csv, read_views_jsonl, write_allan_csv,
    write_frame_csv, write_imu_csv, write_pose_csv, write_views_jsonl, DeltaRecord,
    ExtrinsicsReport, ImuDetReport, IntrinsicsReport, NoiseReport,
};
use camimu_core::preintegration::{preintegrate, slice_interval, NavState};
use camimu_core::synthetic::{
    generate_dataset, generate_multiposition, DatasetConfig, MultiPositionConfig, TrajectorySpec,
};
use camimu_core::GroundTruth;

use crate::config::RunConfig;

/// Command failure carrying the process exit code.
#[derive(Debug)]
pub struct CmdError {
    pub code: u8,
    pub message: String,
}

impl CmdError {
    pub fn new(code: u8, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

type CmdResult = Result<(), CmdError>;

fn input_err(err: impl std::fmt::Display) -> CmdError {
    CmdError::new(1, err.to_string())
}

fn open_reader(path: &Path) -> Result<BufReader<File>, CmdError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| input_err(format!("{}: {e}", path.display())))
}

fn create_writer(path: &Path) -> Result<BufWriter<File>, CmdError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .map_err(|e| input_err(format!("{}: {e}", parent.display())))?;
        }
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| input_err(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CmdResult {
    let mut w = create_writer(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| input_err(e.to_string()))?;
    writeln!(w).map_err(|e| input_err(e.to_string()))?;
    Ok(())
}

/// Reference rig used as the default simulation ground truth.
fn default_sim_extrinsic() -> (RotationMatrix, Vec3) {
    let r = RotationMatrix::project_to_so3(&Mat3::new(
        0.99976023688788251,
        0.012861567340825,
        -0.0177214227256832,
        0.0137597595321047,
        -0.998576606647093,
        -0.0515308613822358,
        -0.017033430526573,
        0.0517623486978128,
        -0.99851415688601164,
    ));
    let t = Vec3::new(0.05715507571041868, 0.254279370393975, 0.0142438531840153);
    (r, t)
}

/// Deterministic corruption injected into the multi-position recording.
fn default_sim_det() -> ImuDeterministicParams {
    ImuDeterministicParams {
        accel_bias: Vec3::new(0.1, -0.05, 0.2),
        gyro_bias: Vec3::new(0.01, -0.008, 0.012),
        accel_scale: Vec3::new(0.98, 1.01, 0.99),
        accel_misalign: Vec3::new(0.01, -0.006, 0.008),
        gyro_scale: Vec3::new(1.02, 0.97, 1.01),
        gyro_misalign: Vec3::new(-0.004, 0.006, 0.009),
    }
}

pub fn cmd_simulate(out: &Path, config: &RunConfig) -> CmdResult {
    let (r_bc, t_bc) = default_sim_extrinsic();
    let noise = ImuNoiseParams::new(
        config.sim_sigma_a,
        config.sim_sigma_w,
        config.sim_sigma_ba,
        config.sim_sigma_bw,
        None,
    )
    .map_err(input_err)?;
    let distortion = camimu_core::DistortionCoeffs::new(
        config.sim_k1,
        config.sim_k2,
        config.sim_p1,
        config.sim_p2,
    )
    .map_err(input_err)?;

    let dataset_config = DatasetConfig {
        trajectory: TrajectorySpec {
            duration: config.sim_duration,
            imu_rate: config.sim_imu_rate,
            cam_rate: config.sim_cam_rate,
            trans_amp: config.sim_trans_amp,
            rot_amp: config.sim_rot_amp,
            seed: config.seed,
            ..TrajectorySpec::default()
        },
        r_bc,
        t_bc,
        distortion,
        imu_noise: noise,
        gravity: config.gravity,
        pixel_noise: config.sim_pixel_noise,
        ..DatasetConfig::default()
    };
    let dataset = generate_dataset(&dataset_config).map_err(input_err)?;
    if dataset.visibility_fraction < 0.9 {
        eprintln!(
            "warning: target visible in only {:.0}% of frames; reduce motion amplitudes or \
             move the target further away",
            dataset.visibility_fraction * 100.0
        );
    }

    // rotate-and-hold recording for the deterministic IMU calibration,
    // with a known corruption to recover
    let det = default_sim_det();
    let multi = generate_multiposition(
        &det,
        config.gravity,
        &MultiPositionConfig {
            n_orientations: config.sim_orientations,
            ..MultiPositionConfig::default()
        },
        config.seed,
    );

    std::fs::create_dir_all(out).map_err(|e| input_err(format!("{}: {e}", out.display())))?;
    write_imu_csv(create_writer(&out.join("imu.csv"))?, &dataset.imu)
        .map_err(|e| input_err(e.to_string()))?;
    write_pose_csv(
        create_writer(&out.join("cam_poses.csv"))?,
        &dataset.cam_poses,
    )
    .map_err(|e| input_err(e.to_string()))?;
    write_views_jsonl(
        create_writer(&out.join("views.jsonl"))?,
        &dataset.intrinsic_views,
    )
    .map_err(|e| input_err(e.to_string()))?;
    write_imu_csv(
        create_writer(&out.join("imu_multiposition.csv"))?,
        &multi.samples,
    )
    .map_err(|e| input_err(e.to_string()))?;
    let frame_times: Vec<f64> = dataset.cam_poses.iter().map(|p| p.t).collect();
    write_frame_csv(create_writer(&out.join("frames.csv"))?, &frame_times)
        .map_err(|e| input_err(e.to_string()))?;

    let multi_samples = multi.samples.len();
    let mut truth = dataset.ground_truth;
    truth.imu_det = det;
    truth.static_intervals = multi.static_intervals;
    write_json(&out.join("ground_truth.json"), &truth)?;

    println!(
        "wrote imu.csv ({} samples), cam_poses.csv ({} frames), views.jsonl ({} views), \
         imu_multiposition.csv ({} samples), frames.csv, ground_truth.json -> {}",
        dataset.imu.len(),
        dataset.cam_poses.len(),
        dataset.intrinsic_views.len(),
        multi_samples,
        out.display()
    );
    Ok(())
}

pub fn cmd_calibrate_camera(views_path: &Path, out: &Path, with_skew: bool) -> CmdResult {
    let views = read_views_jsonl(open_reader(views_path)?).map_err(input_err)?;
    if views.is_empty() {
        return Err(input_err(format!(
            "{}: no views found",
            views_path.display()
        )));
    }

    let cal = calibrate_camera(&views).map_err(|e| match e {
        CameraError::InsufficientViews { needed, got } => CmdError::new(
            2,
            format!("need at least {needed} views with distinct orientations, got {got}"),
        ),
        CameraError::DegenerateView(_) | CameraError::DegenerateGeometry(_) => {
            CmdError::new(2, e.to_string())
        }
        other => input_err(other),
    })?;

    let mut report = IntrinsicsReport::new(
        &cal.intrinsics,
        &cal.distortion,
        &cal.b_matrix,
        &cal.stats,
        views.len(),
    );
    if with_skew {
        report.k[0][1] = cal.intrinsics.skew;
    }
    write_json(&out.join("intrinsics.json"), &report)?;

    let (residuals, _) = camimu_core::camera::reprojection_errors(
        &views,
        &cal.intrinsics,
        &cal.distortion,
        &cal.poses,
    )
    .map_err(input_err)?;
    let mut w = create_writer(&out.join("reproj_residuals.csv"))?;
    writeln!(w, "view_id,corner,du,dv,norm").map_err(input_err)?;
    for (view, per_view) in views.iter().zip(&residuals) {
        for (corner, r) in per_view.iter().enumerate() {
            writeln!(
                w,
                "{},{},{},{},{}",
                view.view_id,
                corner,
                r.x,
                r.y,
                r.norm()
            )
            .map_err(input_err)?;
        }
    }

    print!("{}", report.key_values());
    Ok(())
}

pub fn cmd_allan(imu_path: &Path, out: &Path, config: &RunConfig) -> CmdResult {
    let samples = read_imu_csv(open_reader(imu_path)?).map_err(input_err)?;
    if samples.len() < 3 {
        return Err(CmdError::new(
            2,
            format!(
                "{}: record too short for Allan analysis",
                imu_path.display()
            ),
        ));
    }
    let duration = samples.last().unwrap().t - samples[0].t;
    let dt = duration / (samples.len() - 1) as f64;

    let mut clusters = default_cluster_sizes(samples.len(), config.allan_points_per_decade);
    clusters.retain(|&m| {
        let tau = m as f64 * dt;
        tau >= config.allan_tau_min && tau <= config.allan_tau_max
    });
    if clusters.is_empty() {
        return Err(CmdError::new(
            2,
            "no feasible Allan cluster sizes for this record and tau bounds",
        ));
    }

    let axes: [(&str, Box<dyn Fn(&ImuSample) -> f64>); 6] = [
        ("ax", Box::new(|s: &ImuSample| s.accel.x)),
        ("ay", Box::new(|s: &ImuSample| s.accel.y)),
        ("az", Box::new(|s: &ImuSample| s.accel.z)),
        ("gx", Box::new(|s: &ImuSample| s.gyro.x)),
        ("gy", Box::new(|s: &ImuSample| s.gyro.y)),
        ("gz", Box::new(|s: &ImuSample| s.gyro.z)),
    ];

    let mut curves: Vec<(String, AllanCurve)> = Vec::new();
    let mut omitted_total = 0usize;
    for (name, extract) in &axes {
        let series: Vec<f64> = samples.iter().map(extract.as_ref()).collect();
        let (curve, omitted) = allan_variance(&series, dt, &clusters).map_err(|e| match e {
            ImuError::RecordTooShort { .. } => CmdError::new(2, e.to_string()),
            other => input_err(other),
        })?;
        omitted_total += omitted.len();
        curves.push((name.to_string(), curve));
    }
    if omitted_total > 0 {
        eprintln!("warning: {omitted_total} tau points omitted (record too short for them)");
    }

    write_allan_csv(create_writer(&out.join("allan.csv"))?, &curves)
        .map_err(|e| input_err(e.to_string()))?;

    let accel_curves = [
        curves[0].1.clone(),
        curves[1].1.clone(),
        curves[2].1.clone(),
    ];
    let gyro_curves = [
        curves[3].1.clone(),
        curves[4].1.clone(),
        curves[5].1.clone(),
    ];
    let fits = fit_noise_params(&gyro_curves, &accel_curves);
    let report = NoiseReport::new(fits);
    write_json(&out.join("noise.json"), &report)?;

    if report.gyro_noise_mean.is_none() || report.accel_noise_mean.is_none() {
        return Err(CmdError::new(
            2,
            "noise density unidentifiable (no -1/2-slope regime found)",
        ));
    }
    if report.gyro_walk_mean.is_none() || report.accel_walk_mean.is_none() {
        eprintln!(
            "warning: random walk unidentifiable on at least one axis (left null in noise.json)"
        );
    }
    println!(
        "gyro_noise={:?} gyro_walk={:?} accel_noise={:?} accel_walk={:?}",
        report.gyro_noise_mean,
        report.gyro_walk_mean,
        report.accel_noise_mean,
        report.accel_walk_mean
    );
    Ok(())
}

pub fn cmd_calibrate_imu(imu_path: &Path, out: &Path, config: &RunConfig) -> CmdResult {
    let samples = read_imu_csv(open_reader(imu_path)?).map_err(input_err)?;
    let detector = StaticDetectorConfig {
        window: config.static_window,
        threshold_factor: config.static_threshold_factor,
        ..StaticDetectorConfig::default()
    };
    let intervals = detect_static_intervals(&samples, &detector).map_err(|e| match e {
        ImuError::NoStaticIntervals | ImuError::RecordTooShort { .. } => {
            CmdError::new(2, e.to_string())
        }
        other => input_err(other),
    })?;
    let stats = static_interval_stats(&samples, &intervals, 0.25 * config.static_window);
    let means: Vec<Vec3> = stats.iter().map(|s| s.mean_accel).collect();

    let accel = calibrate_accelerometer(&means, config.gravity).map_err(|e| match &e {
        ImuError::Convergence { trace, .. } => {
            let trace_path = out.join("accel_loss_trace.csv");
            if let Ok(mut w) = create_writer(&trace_path) {
                let _ = writeln!(w, "iteration,loss");
                for (i, loss) in trace.iter().enumerate() {
                    let _ = writeln!(w, "{i},{loss}");
                }
            }
            CmdError::new(3, format!("{e}; loss trace at {}", trace_path.display()))
        }
        ImuError::NotEnoughOrientations { .. } | ImuError::Observability(_) => {
            CmdError::new(3, e.to_string())
        }
        _ => input_err(e),
    })?;

    let gyro = calibrate_gyroscope(&samples, &stats, &accel.params(), config.gravity).map_err(
        |e| match &e {
            ImuError::Convergence { trace, .. } => {
                let trace_path = out.join("gyro_loss_trace.csv");
                if let Ok(mut w) = create_writer(&trace_path) {
                    let _ = writeln!(w, "iteration,loss");
                    for (i, loss) in trace.iter().enumerate() {
                        let _ = writeln!(w, "{i},{loss}");
                    }
                }
                CmdError::new(3, format!("{e}; loss trace at {}", trace_path.display()))
            }
            ImuError::NotEnoughOrientations { .. }
            | ImuError::Observability(_)
            | ImuError::MissingStaticBracket { .. } => CmdError::new(3, e.to_string()),
            _ => input_err(e),
        },
    )?;

    let det = ImuDeterministicParams {
        accel_bias: accel.bias,
        accel_scale: accel.scale,
        accel_misalign: accel.misalign,
        gyro_bias: gyro.bias,
        gyro_scale: gyro.scale,
        gyro_misalign: gyro.misalign,
    };
    let report = ImuDetReport::new(&det, accel.final_loss, gyro.final_loss, intervals.len());
    write_json(&out.join("imu_det.json"), &report)?;
    println!(
        "static_intervals={} accel_loss={:.3e} gyro_loss={:.3e}",
        intervals.len(),
        accel.final_loss,
        gyro.final_loss
    );
    Ok(())
}

pub fn cmd_calibrate_extrinsics(
    imu_path: &Path,
    poses_path: &Path,
    ground_truth: Option<&PathBuf>,
    out: &Path,
    config: &RunConfig,
) -> CmdResult {
    let imu = read_imu_csv(open_reader(imu_path)?).map_err(input_err)?;
    let poses_raw = read_pose_csv(open_reader(poses_path)?).map_err(input_err)?;
    let poses: Vec<_> = poses_raw
        .iter()
        .map(|p| p.to_cam_to_world(config.pose_convention))
        .collect();

    if poses.len() < 5 {
        return Err(CmdError::new(
            2,
            format!("need at least 5 camera frames, got {}", poses.len()),
        ));
    }
    if imu.is_empty() {
        return Err(input_err(format!(
            "{}: empty recording",
            imu_path.display()
        )));
    }
    let imu_range = (imu[0].t, imu.last().unwrap().t);
    let pose_range = (poses[0].t, poses.last().unwrap().t);
    if pose_range.1 < imu_range.0 || pose_range.0 > imu_range.1 {
        return Err(input_err(format!(
            "IMU [{:.3}, {:.3}] and camera [{:.3}, {:.3}] time ranges do not overlap",
            imu_range.0, imu_range.1, pose_range.0, pose_range.1
        )));
    }

    let mut pairs = Vec::new();
    let mut deltas = Vec::new();
    let mut pair_times = Vec::new();
    for k in 0..poses.len() - 1 {
        let (t0, t1) = (poses[k].t, poses[k + 1].t);
        if t0 < imu_range.0 || t1 > imu_range.1 {
            continue;
        }
        let run = match slice_interval(&imu, t0, t1) {
            Ok(run) => run,
            Err(_) => continue,
        };
        let delta = match preintegrate(&run, &Vec3::zeros(), &Vec3::zeros()) {
            Ok(d) => d,
            Err(_) => continue,
        };
        match pair_from_camera_poses(
            &poses[k],
            &poses[k + 1],
            &delta,
            PoseConvention::CamToWorld,
            pairs.len(),
        ) {
            Ok(pair) => {
                pairs.push(pair);
                deltas.push(delta);
                pair_times.push((t0, t1));
            }
            Err(_) => continue,
        }
    }

    let solver = config.solver_config();
    let mut result =
        solve_rotation(&pairs, &solver).map_err(|e| CmdError::new(2, e.to_string()))?;

    // translation needs per-frame states; they come from the oracle file.
    // Only single-period pairs enter the solve: intervals spanning dropped
    // frames integrate longer arcs with disproportionate alpha error.
    let mut translation_rms = None;
    if let Some(gt_path) = ground_truth {
        let truth: GroundTruth =
            serde_json::from_reader(open_reader(gt_path)?).map_err(|e| input_err(e.to_string()))?;
        let g_w = Vec3::new(0.0, 0.0, truth.gravity);
        let mut periods: Vec<f64> = pair_times.iter().map(|(a, b)| b - a).collect();
        periods.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median_period = periods[periods.len() / 2];
        let mut t_pairs = Vec::new();
        let mut t_deltas = Vec::new();
        let mut t_states: Vec<NavState> = Vec::new();
        for (k, &(t0, t1)) in pair_times.iter().enumerate() {
            if t1 - t0 > 1.5 * median_period {
                continue;
            }
            if let Some((_, s)) = truth
                .frame_states
                .iter()
                .find(|(t, _)| (t - t0).abs() < 1e-6)
            {
                t_pairs.push(pairs[k]);
                t_deltas.push(deltas[k]);
                t_states.push(*s);
            }
        }
        if t_pairs.len() >= 4 {
            match solve_translation(&t_pairs, &t_deltas, &result.r_bc, &g_w, &t_states) {
                Ok(solution) => {
                    result.t_bc = Some(solution.t_bc);
                    translation_rms = Some(solution.residual_rms);
                }
                Err(e) => eprintln!("translation not solved: {e}"),
            }
        } else {
            eprintln!("translation not solved: ground-truth states do not cover the frame times");
        }
    }

    let report = ExtrinsicsReport::new(&result, translation_rms);
    write_json(&out.join("extrinsics.json"), &report)?;

    let mut w = create_writer(&out.join("pair_residuals.csv"))?;
    writeln!(w, "pair_index,t0,t1,residual_deg,weight").map_err(input_err)?;
    for (slot, &idx) in result.used_pairs.iter().enumerate() {
        let (t0, t1) = pair_times[idx];
        writeln!(
            w,
            "{},{},{},{},{}",
            idx,
            t0,
            t1,
            result.residuals[slot].to_degrees(),
            result.weights[slot]
        )
        .map_err(input_err)?;
    }

    let mut w = create_writer(&out.join("round_history.csv"))?;
    writeln!(w, "round,weighted_residual_sq,rotation_change_deg").map_err(input_err)?;
    for r in &result.rounds {
        writeln!(
            w,
            "{},{},{}",
            r.round,
            r.weighted_residual_sq,
            if r.rotation_change.is_finite() {
                r.rotation_change.to_degrees()
            } else {
                f64::NAN
            }
        )
        .map_err(input_err)?;
    }

    if result.under_excited {
        println!(
            "WARNING: UNDER-EXCITED MOTION - rotation about too few axes; extrinsic rotation \
             is not reliably observable (sigma_3/sigma_4 = {:.2})",
            result.singular_values[2] / result.singular_values[3].max(1e-300)
        );
    }
    println!(
        "q_bc=[{}, {}, {}, {}] converged={} pairs={} iterations={}",
        result.q_bc.w,
        result.q_bc.x,
        result.q_bc.y,
        result.q_bc.z,
        result.converged,
        result.used_pairs.len(),
        result.iterations
    );
    Ok(())
}

pub fn cmd_preintegrate(imu_path: &Path, frames_path: &Path, out: &Path) -> CmdResult {
    let imu = read_imu_csv(open_reader(imu_path)?).map_err(input_err)?;
    let frames = read_frame_csv(open_reader(frames_path)?).map_err(input_err)?;
    if frames.len() < 2 {
        return Err(CmdError::new(2, "need at least 2 frame times"));
    }

    let mut w = create_writer(&out.join("deltas.jsonl"))?;
    let mut written = 0usize;
    let mut skipped = 0usize;
    for pair in frames.windows(2) {
        let run = match slice_interval(&imu, pair[0], pair[1]) {
            Ok(run) => run,
            Err(_) => {
                skipped += 1;
                continue;
            }
        };
        match preintegrate(&run, &Vec3::zeros(), &Vec3::zeros()) {
            Ok(delta) => {
                serde_json::to_writer(&mut w, &DeltaRecord::new(&delta))
                    .map_err(|e| input_err(e.to_string()))?;
                writeln!(w).map_err(input_err)?;
                written += 1;
            }
            Err(_) => skipped += 1,
        }
    }
    if skipped > 0 {
        eprintln!("warning: {skipped} frame intervals not covered by the IMU recording");
    }
    if written == 0 {
        return Err(CmdError::new(
            2,
            "no frame interval overlaps the IMU recording",
        ));
    }
    println!("wrote {written} deltas");
    Ok(())
}
