//! File formats: CSV recordings (IMU, camera poses, frame times), JSONL
//! planar views, Allan curves and the JSON report layouts. All text is
//! UTF-8 with LF line endings and `.` decimal separators; floats are written
//! in shortest round-trip form so equal data produces identical bytes.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::{
    BMatrix, CameraIntrinsics, Correspondence, DistortionCoeffs, Pixel, PlanarView,
    ReprojectionStats, TargetPoint,
};
use crate::extrinsics::{ExtrinsicResult, StampedPose};
use crate::geometry::{RotationMatrix, UnitQuaternion, Vec3};
use crate::imu::{AllanCurve, ImuSample, NoiseFitReport};
use crate::preintegration::PreintegratedDelta;

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("{0}")]
    Format(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn parse_err(line: usize, msg: impl Into<String>) -> IoError {
    IoError::Parse {
        line,
        msg: msg.into(),
    }
}

fn parse_f64(line: usize, field: &str, s: &str) -> Result<f64, IoError> {
    s.trim()
        .parse::<f64>()
        .map_err(|e| parse_err(line, format!("bad {field} value {s:?}: {e}")))
}

// ---------------------------------------------------------------------------
// IMU recording CSV: t,ax,ay,az,gx,gy,gz
// ---------------------------------------------------------------------------

pub const IMU_CSV_HEADER: &str = "t,ax,ay,az,gx,gy,gz";

pub fn write_imu_csv<W: Write>(mut w: W, samples: &[ImuSample]) -> Result<(), IoError> {
    writeln!(w, "{IMU_CSV_HEADER}")?;
    for s in samples {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            s.t, s.accel.x, s.accel.y, s.accel.z, s.gyro.x, s.gyro.y, s.gyro.z
        )?;
    }
    Ok(())
}

pub fn read_imu_csv<R: BufRead>(r: R) -> Result<Vec<ImuSample>, IoError> {
    let mut out = Vec::new();
    let mut last_t = f64::NEG_INFINITY;
    for (idx, line) in r.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if idx == 0 {
            if trimmed != IMU_CSV_HEADER {
                return Err(parse_err(
                    lineno,
                    format!("expected header {IMU_CSV_HEADER:?}, got {trimmed:?}"),
                ));
            }
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        if fields.len() != 7 {
            return Err(parse_err(
                lineno,
                format!("expected 7 fields, got {}", fields.len()),
            ));
        }
        let t = parse_f64(lineno, "t", fields[0])?;
        if t <= last_t {
            return Err(parse_err(lineno, "timestamps must be strictly increasing"));
        }
        last_t = t;
        out.push(ImuSample::new(
            t,
            Vec3::new(
                parse_f64(lineno, "ax", fields[1])?,
                parse_f64(lineno, "ay", fields[2])?,
                parse_f64(lineno, "az", fields[3])?,
            ),
            Vec3::new(
                parse_f64(lineno, "gx", fields[4])?,
                parse_f64(lineno, "gy", fields[5])?,
                parse_f64(lineno, "gz", fields[6])?,
            ),
        ));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Camera pose CSV: t,qw,qx,qy,qz,tx,ty,tz
// ---------------------------------------------------------------------------

pub const POSE_CSV_HEADER: &str = "t,qw,qx,qy,qz,tx,ty,tz";

pub fn write_pose_csv<W: Write>(mut w: W, poses: &[StampedPose]) -> Result<(), IoError> {
    writeln!(w, "{POSE_CSV_HEADER}")?;
    for p in poses {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            p.t, p.q.w, p.q.x, p.q.y, p.q.z, p.trans.x, p.trans.y, p.trans.z
        )?;
    }
    Ok(())
}

pub fn read_pose_csv<R: BufRead>(r: R) -> Result<Vec<StampedPose>, IoError> {
    let mut out: Vec<StampedPose> = Vec::new();
    for (idx, line) in r.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if idx == 0 {
            if trimmed != POSE_CSV_HEADER {
                return Err(parse_err(
                    lineno,
                    format!("expected header {POSE_CSV_HEADER:?}, got {trimmed:?}"),
                ));
            }
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        if fields.len() != 8 {
            return Err(parse_err(
                lineno,
                format!("expected 8 fields, got {}", fields.len()),
            ));
        }
        let t = parse_f64(lineno, "t", fields[0])?;
        if let Some(prev) = out.last() {
            if t <= prev.t {
                return Err(parse_err(lineno, "timestamps must be strictly increasing"));
            }
        }
        let q = UnitQuaternion::new(
            parse_f64(lineno, "qw", fields[1])?,
            parse_f64(lineno, "qx", fields[2])?,
            parse_f64(lineno, "qy", fields[3])?,
            parse_f64(lineno, "qz", fields[4])?,
        )
        .map_err(|e| parse_err(lineno, e.to_string()))?;
        out.push(StampedPose {
            t,
            q,
            trans: Vec3::new(
                parse_f64(lineno, "tx", fields[5])?,
                parse_f64(lineno, "ty", fields[6])?,
                parse_f64(lineno, "tz", fields[7])?,
            ),
        });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Frame-time CSV: t_frame
// ---------------------------------------------------------------------------

pub const FRAME_CSV_HEADER: &str = "t_frame";

pub fn write_frame_csv<W: Write>(mut w: W, times: &[f64]) -> Result<(), IoError> {
    writeln!(w, "{FRAME_CSV_HEADER}")?;
    for t in times {
        writeln!(w, "{t}")?;
    }
    Ok(())
}

pub fn read_frame_csv<R: BufRead>(r: R) -> Result<Vec<f64>, IoError> {
    let mut out: Vec<f64> = Vec::new();
    for (idx, line) in r.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if idx == 0 {
            if trimmed != FRAME_CSV_HEADER {
                return Err(parse_err(
                    lineno,
                    format!("expected header {FRAME_CSV_HEADER:?}, got {trimmed:?}"),
                ));
            }
            continue;
        }
        let t = parse_f64(lineno, "t_frame", trimmed)?;
        if let Some(&prev) = out.last() {
            if t <= prev {
                return Err(parse_err(lineno, "frame times must be strictly increasing"));
            }
        }
        out.push(t);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Planar views JSONL: {"view_id": .., "points": [{"tx","ty","u","v"}, ..]}
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct ViewRecord {
    view_id: u64,
    points: Vec<PointRecord>,
}

#[derive(Serialize, Deserialize)]
struct PointRecord {
    tx: f64,
    ty: f64,
    u: f64,
    v: f64,
}

pub fn write_views_jsonl<W: Write>(mut w: W, views: &[PlanarView]) -> Result<(), IoError> {
    for view in views {
        let record = ViewRecord {
            view_id: view.view_id,
            points: view
                .points
                .iter()
                .map(|c| PointRecord {
                    tx: c.target.x,
                    ty: c.target.y,
                    u: c.pixel.x,
                    v: c.pixel.y,
                })
                .collect(),
        };
        serde_json::to_writer(&mut w, &record)?;
        writeln!(w)?;
    }
    Ok(())
}

pub fn read_views_jsonl<R: BufRead>(r: R) -> Result<Vec<PlanarView>, IoError> {
    let mut out = Vec::new();
    for (idx, line) in r.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let record: ViewRecord = serde_json::from_str(&line)
            .map_err(|e| parse_err(lineno, format!("bad view record: {e}")))?;
        out.push(PlanarView::new(
            record.view_id,
            record
                .points
                .iter()
                .map(|p| Correspondence {
                    target: TargetPoint::new(p.tx, p.ty),
                    pixel: Pixel::new(p.u, p.v),
                })
                .collect(),
        ));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Allan curve CSV: axis,tau,adev,count
// ---------------------------------------------------------------------------

pub const ALLAN_CSV_HEADER: &str = "axis,tau,adev,count";

pub fn write_allan_csv<W: Write>(mut w: W, curves: &[(String, AllanCurve)]) -> Result<(), IoError> {
    writeln!(w, "{ALLAN_CSV_HEADER}")?;
    for (axis, curve) in curves {
        for p in &curve.points {
            writeln!(w, "{},{},{},{}", axis, p.tau, p.adev(), p.count)?;
        }
    }
    Ok(())
}

pub fn read_allan_csv<R: BufRead>(r: R) -> Result<Vec<(String, AllanCurve)>, IoError> {
    let mut out: Vec<(String, AllanCurve)> = Vec::new();
    for (idx, line) in r.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if idx == 0 {
            if trimmed != ALLAN_CSV_HEADER {
                return Err(parse_err(
                    lineno,
                    format!("expected header {ALLAN_CSV_HEADER:?}, got {trimmed:?}"),
                ));
            }
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        if fields.len() != 4 {
            return Err(parse_err(
                lineno,
                format!("expected 4 fields, got {}", fields.len()),
            ));
        }
        let axis = fields[0].to_string();
        let tau = parse_f64(lineno, "tau", fields[1])?;
        let adev = parse_f64(lineno, "adev", fields[2])?;
        let count: usize = fields[3]
            .trim()
            .parse()
            .map_err(|e| parse_err(lineno, format!("bad count {:?}: {e}", fields[3])))?;
        let point = crate::imu::AllanPoint {
            tau,
            avar: adev * adev,
            count,
        };
        match out.last_mut() {
            Some((name, curve)) if *name == axis => curve.points.push(point),
            _ => out.push((
                axis,
                AllanCurve {
                    points: vec![point],
                },
            )),
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Report layouts
// ---------------------------------------------------------------------------

/// Intrinsics report: K and the 2x2 distortion block, plus flat fields.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IntrinsicsReport {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub skew: f64,
    pub k: [[f64; 3]; 3],
    pub u_d: [[f64; 2]; 2],
    pub distortion: DistortionCoeffs,
    pub b_matrix: BMatrix,
    pub reprojection: ReprojectionStats,
    pub n_views: usize,
}

impl IntrinsicsReport {
    pub fn new(
        intr: &CameraIntrinsics,
        dist: &DistortionCoeffs,
        b: &BMatrix,
        stats: &ReprojectionStats,
        n_views: usize,
    ) -> Self {
        let k = intr.k_matrix();
        Self {
            fx: intr.fx,
            fy: intr.fy,
            cx: intr.cx,
            cy: intr.cy,
            skew: intr.skew,
            k: [
                [k[(0, 0)], k[(0, 1)], k[(0, 2)]],
                [k[(1, 0)], k[(1, 1)], k[(1, 2)]],
                [k[(2, 0)], k[(2, 1)], k[(2, 2)]],
            ],
            u_d: [[dist.k1, dist.k2], [dist.p1, dist.p2]],
            distortion: *dist,
            b_matrix: *b,
            reprojection: *stats,
            n_views,
        }
    }

    /// The plain-text key=value block mirrored next to the JSON.
    pub fn key_values(&self) -> String {
        format!(
            "fx={}\nfy={}\ncx={}\ncy={}\nskew={}\nk1={}\nk2={}\np1={}\np2={}\nreproj_rms_px={}\nreproj_max_px={}\n",
            self.fx,
            self.fy,
            self.cx,
            self.cy,
            self.skew,
            self.distortion.k1,
            self.distortion.k2,
            self.distortion.p1,
            self.distortion.p2,
            self.reprojection.rms,
            self.reprojection.max
        )
    }
}

/// Per-axis + mean noise identification, Tables-style layout.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NoiseReport {
    pub per_axis: NoiseFitReport,
    pub gyro_noise_mean: Option<f64>,
    pub gyro_walk_mean: Option<f64>,
    pub accel_noise_mean: Option<f64>,
    pub accel_walk_mean: Option<f64>,
}

impl NoiseReport {
    pub fn new(per_axis: NoiseFitReport) -> Self {
        let mean = |vals: Vec<Option<f64>>| -> Option<f64> {
            let xs: Vec<f64> = vals.into_iter().flatten().collect();
            if xs.len() == 3 {
                Some(xs.iter().sum::<f64>() / 3.0)
            } else {
                None
            }
        };
        let gyro_noise_mean = mean(
            per_axis
                .gyro
                .iter()
                .map(|a| a.noise_density.map(|f| f.value))
                .collect(),
        );
        let gyro_walk_mean = mean(
            per_axis
                .gyro
                .iter()
                .map(|a| a.random_walk.map(|f| f.value))
                .collect(),
        );
        let accel_noise_mean = mean(
            per_axis
                .accel
                .iter()
                .map(|a| a.noise_density.map(|f| f.value))
                .collect(),
        );
        let accel_walk_mean = mean(
            per_axis
                .accel
                .iter()
                .map(|a| a.random_walk.map(|f| f.value))
                .collect(),
        );
        Self {
            per_axis,
            gyro_noise_mean,
            gyro_walk_mean,
            accel_noise_mean,
            accel_walk_mean,
        }
    }
}

/// Deterministic IMU calibration report: biases plus the scale and
/// misalignment matrices in row-major order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImuDetReport {
    pub accel_bias: [f64; 3],
    pub gyro_bias: [f64; 3],
    pub accel_scale_matrix: [[f64; 3]; 3],
    pub accel_misalign_matrix: [[f64; 3]; 3],
    pub gyro_scale_matrix: [[f64; 3]; 3],
    pub gyro_misalign_matrix: [[f64; 3]; 3],
    pub accel_final_loss: f64,
    pub gyro_final_loss: f64,
    pub n_static_intervals: usize,
}

fn mat_rows(m: &crate::geometry::Mat3) -> [[f64; 3]; 3] {
    [
        [m[(0, 0)], m[(0, 1)], m[(0, 2)]],
        [m[(1, 0)], m[(1, 1)], m[(1, 2)]],
        [m[(2, 0)], m[(2, 1)], m[(2, 2)]],
    ]
}

impl ImuDetReport {
    pub fn new(
        det: &crate::imu::ImuDeterministicParams,
        accel_final_loss: f64,
        gyro_final_loss: f64,
        n_static_intervals: usize,
    ) -> Self {
        Self {
            accel_bias: [det.accel_bias.x, det.accel_bias.y, det.accel_bias.z],
            gyro_bias: [det.gyro_bias.x, det.gyro_bias.y, det.gyro_bias.z],
            accel_scale_matrix: mat_rows(&det.accel_scale_matrix()),
            accel_misalign_matrix: mat_rows(&det.accel_misalign_matrix()),
            gyro_scale_matrix: mat_rows(&det.gyro_scale_matrix()),
            gyro_misalign_matrix: mat_rows(&det.gyro_misalign_matrix()),
            accel_final_loss,
            gyro_final_loss,
            n_static_intervals,
        }
    }
}

/// Extrinsic calibration report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExtrinsicsReport {
    pub q_bc: [f64; 4],
    pub r_bc: [[f64; 3]; 3],
    pub t_bc: Option<[f64; 3]>,
    pub translation_residual_rms: Option<f64>,
    pub singular_values: [f64; 4],
    pub iterations: usize,
    pub converged: bool,
    pub under_excited: bool,
    pub pairs: Vec<PairDiagnostics>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PairDiagnostics {
    pub pair_index: usize,
    pub residual_rad: f64,
    pub weight: f64,
}

impl ExtrinsicsReport {
    pub fn new(result: &ExtrinsicResult, translation_residual_rms: Option<f64>) -> Self {
        Self {
            q_bc: [result.q_bc.w, result.q_bc.x, result.q_bc.y, result.q_bc.z],
            r_bc: mat_rows(result.r_bc.matrix()),
            t_bc: result.t_bc.map(|t| [t.x, t.y, t.z]),
            translation_residual_rms,
            singular_values: result.singular_values,
            iterations: result.iterations,
            converged: result.converged,
            under_excited: result.under_excited,
            pairs: result
                .used_pairs
                .iter()
                .zip(result.residuals.iter().zip(&result.weights))
                .map(|(&pair_index, (&residual_rad, &weight))| PairDiagnostics {
                    pair_index,
                    residual_rad,
                    weight,
                })
                .collect(),
        }
    }
}

/// One pre-integrated interval as emitted by the `preintegrate` subcommand.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeltaRecord {
    pub t0: f64,
    pub t1: f64,
    pub alpha: [f64; 3],
    pub beta: [f64; 3],
    pub gamma: [f64; 4],
    pub dt: f64,
    pub sample_count: usize,
    pub gap_warning: bool,
}

impl DeltaRecord {
    pub fn new(delta: &PreintegratedDelta) -> Self {
        Self {
            t0: delta.t_start,
            t1: delta.t_start + delta.dt_total,
            alpha: [delta.alpha.x, delta.alpha.y, delta.alpha.z],
            beta: [delta.beta.x, delta.beta.y, delta.beta.z],
            gamma: [delta.gamma.w, delta.gamma.x, delta.gamma.y, delta.gamma.z],
            dt: delta.dt_total,
            sample_count: delta.sample_count,
            gap_warning: delta.gap_warning,
        }
    }
}

/// Round-trip helper for rotation matrices in reports.
pub fn rotation_from_rows(rows: &[[f64; 3]; 3]) -> Result<RotationMatrix, IoError> {
    let m = crate::geometry::Mat3::new(
        rows[0][0], rows[0][1], rows[0][2], //
        rows[1][0], rows[1][1], rows[1][2], //
        rows[2][0], rows[2][1], rows[2][2],
    );
    RotationMatrix::from_matrix(&m).map_err(|e| IoError::Format(e.to_string()))
}
