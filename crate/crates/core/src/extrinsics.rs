//! Camera-IMU extrinsic rotation from paired relative rotations.
//!
//! Each interval k gives the hand-eye constraint
//! q_imu ⊗ q_bc = q_bc ⊗ q_cam, linearized as
//! ([q_imu]_L − [q_cam]_R) q_bc = Q q_bc = 0. Stacking Huber-weighted Q
//! blocks over all intervals and taking the right singular vector of the
//! smallest singular value yields q_bc; reweighting from the angle residuals
//! and re-solving suppresses outliers. A well-separated null space
//! (σ₃/σ₄ large) certifies the motion excited enough rotation axes.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    quat_left_matrix, quat_right_matrix, rotation_angle_residual, Mat3, Mat4, RotationMatrix,
    UnitQuaternion, Vec3,
};
use crate::preintegration::{relative_rotation, NavState, PreintegratedDelta};

#[derive(Debug, Error)]
pub enum ExtrinsicError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("need at least {needed} usable pairs, got {got} (after degenerate-pair filtering)")]
    InsufficientPairs { needed: usize, got: usize },
    #[error("translation unobservable: stacked rotation system rank {rank} < 3")]
    UnobservableTranslation { rank: usize },
    #[error(
        "delta interval [{delta_start:.4}, {delta_end:.4}] misaligned with pose pair [{pose_start:.4}, {pose_end:.4}]"
    )]
    Alignment {
        delta_start: f64,
        delta_end: f64,
        pose_start: f64,
        pose_end: f64,
    },
}

/// One interval's relative-rotation constraint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelativeRotationPair {
    /// IMU rotation over the interval, from pre-integration.
    pub q_imu: UnitQuaternion,
    /// Camera rotation over the interval, from poses.
    pub q_cam: UnitQuaternion,
    /// Camera relative translation, metres, when available.
    pub t_cam: Option<Vec3>,
    pub interval_id: usize,
}

impl RelativeRotationPair {
    pub fn new(q_imu: UnitQuaternion, q_cam: UnitQuaternion, interval_id: usize) -> Self {
        Self {
            q_imu: q_imu.canonicalized(),
            q_cam: q_cam.canonicalized(),
            t_cam: None,
            interval_id,
        }
    }

    pub fn with_translation(mut self, t_cam: Vec3) -> Self {
        self.t_cam = Some(t_cam);
        self
    }
}

/// Solver configuration: 5° Huber threshold, 0.5° degenerate-pair floor
/// and conservative null-space diagnostics by default.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Huber threshold, radians (default 5°).
    pub r_thr: f64,
    /// Reweighting rounds after the unweighted round 0.
    pub max_rounds: usize,
    /// Pairs rotating less than this on either sensor are dropped, radians.
    pub min_rotation: f64,
    /// σ₃/σ₄ must exceed this for the null space to count as well separated.
    pub sv_ratio_threshold: f64,
    /// Stop when the rotation update falls below this angle, radians.
    pub rotation_change_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            r_thr: 5.0_f64.to_radians(),
            max_rounds: 10,
            min_rotation: 0.5_f64.to_radians(),
            sv_ratio_threshold: 100.0,
            rotation_change_tol: 0.01_f64.to_radians(),
        }
    }
}

/// Per-round solver diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundStats {
    pub round: usize,
    /// Σ w · r² over the pairs that entered this round's solve.
    pub weighted_residual_sq: f64,
    /// Rotation change against the previous round, radians.
    pub rotation_change: f64,
}

/// Solved extrinsic rotation with diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExtrinsicResult {
    pub q_bc: UnitQuaternion,
    pub r_bc: RotationMatrix,
    pub t_bc: Option<Vec3>,
    /// Final Huber weights, aligned with `used_pairs`.
    pub weights: Vec<f64>,
    /// Final angle residuals (radians), aligned with `used_pairs`.
    pub residuals: Vec<f64>,
    /// Indices into the input pair list that survived filtering.
    pub used_pairs: Vec<usize>,
    /// All four singular values of the final stacked system, descending.
    pub singular_values: [f64; 4],
    pub iterations: usize,
    /// True when the iteration settled and σ₃/σ₄ certifies the null space.
    pub converged: bool,
    /// True when σ₃/σ₄ fell below the threshold (rotation about too few axes).
    pub under_excited: bool,
    pub rounds: Vec<RoundStats>,
}

/// Q = [q_imu]_L − [q_cam]_R; Q q_bc = 0 for the true extrinsic rotation.
pub fn constraint_block(pair: &RelativeRotationPair) -> Mat4 {
    quat_left_matrix(&pair.q_imu) - quat_right_matrix(&pair.q_cam)
}

/// Huber weight: 1 below the threshold, r_thr/r beyond it.
pub fn huber_weight(residual: f64, r_thr: f64) -> f64 {
    debug_assert!(residual >= 0.0 && r_thr > 0.0);
    if residual < r_thr {
        1.0
    } else {
        r_thr / residual
    }
}

/// Iteratively reweighted SVD solve for q_bc.
pub fn solve_rotation(
    pairs: &[RelativeRotationPair],
    config: &SolverConfig,
) -> Result<ExtrinsicResult, ExtrinsicError> {
    let used_pairs: Vec<usize> = pairs
        .iter()
        .enumerate()
        .filter(|(_, p)| {
            p.q_imu.angle() >= config.min_rotation && p.q_cam.angle() >= config.min_rotation
        })
        .map(|(i, _)| i)
        .collect();
    let n = used_pairs.len();
    if n < 4 {
        return Err(ExtrinsicError::InsufficientPairs { needed: 4, got: n });
    }

    let blocks: Vec<Mat4> = used_pairs
        .iter()
        .map(|&i| constraint_block(&pairs[i]))
        .collect();
    let rots: Vec<(RotationMatrix, RotationMatrix)> = used_pairs
        .iter()
        .map(|&i| (pairs[i].q_imu.to_rotation(), pairs[i].q_cam.to_rotation()))
        .collect();

    let mut weights = vec![1.0; n];
    let mut q_bc = UnitQuaternion::identity();
    let mut singular_values = [0.0; 4];
    let mut rounds = Vec::new();
    let mut iterations = 0;
    let mut settled = false;

    for round in 0..=config.max_rounds {
        iterations = round + 1;
        let mut stacked = DMatrix::<f64>::zeros(4 * n, 4);
        for (k, block) in blocks.iter().enumerate() {
            let weighted = weights[k] * block;
            stacked.view_mut((4 * k, 0), (4, 4)).copy_from(&weighted);
        }
        let svd = stacked.svd(false, true);
        let v_t = svd.v_t.as_ref().expect("svd Vt");
        let sv = &svd.singular_values;
        let mut order: Vec<usize> = (0..4).collect();
        order.sort_by(|&a, &b| sv[b].partial_cmp(&sv[a]).unwrap());
        for (slot, &idx) in order.iter().enumerate() {
            singular_values[slot] = sv[idx];
        }
        let null_row = v_t.row(order[3]);
        let q_new = UnitQuaternion::new(null_row[0], null_row[1], null_row[2], null_row[3])
            .expect("singular vector is unit length")
            .canonicalized();

        let rotation_change = if round == 0 {
            f64::INFINITY
        } else {
            q_bc.angle_to(&q_new)
        };
        q_bc = q_new;

        let r_bc = q_bc.to_rotation();
        let mut weighted_residual_sq = 0.0;
        let mut next_weights = Vec::with_capacity(n);
        for (k, (r_imu, r_cam)) in rots.iter().enumerate() {
            let r = rotation_angle_residual(&r_bc, r_imu, r_cam);
            weighted_residual_sq += weights[k] * r * r;
            next_weights.push(huber_weight(r, config.r_thr));
        }
        rounds.push(RoundStats {
            round,
            weighted_residual_sq,
            rotation_change,
        });
        weights = next_weights;

        if rotation_change < config.rotation_change_tol {
            settled = true;
            break;
        }
    }

    let r_bc = q_bc.to_rotation();
    let residuals: Vec<f64> = rots
        .iter()
        .map(|(r_imu, r_cam)| rotation_angle_residual(&r_bc, r_imu, r_cam))
        .collect();
    let weights: Vec<f64> = residuals
        .iter()
        .map(|&r| huber_weight(r, config.r_thr))
        .collect();

    // a second near-null direction means rotation about too few axes: either
    // σ₃ sits close to σ₄ (noisy degenerate data) or both have collapsed to
    // round-off relative to σ₁ (exact degenerate data)
    let under_excited = singular_values[2] < config.sv_ratio_threshold * singular_values[3]
        || singular_values[2] < 1e-9 * singular_values[0];

    Ok(ExtrinsicResult {
        q_bc,
        r_bc,
        t_bc: None,
        weights,
        residuals,
        used_pairs,
        singular_values,
        iterations,
        converged: settled && !under_excited,
        under_excited,
        rounds,
    })
}

/// Translation solve outcome.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TranslationSolve {
    pub t_bc: Vec3,
    pub residual_rms: f64,
}

/// Least-squares hand-eye translation: stack
/// (R_imu_k − I) t_bc = R_bc t_cam_k − t_imu_k over all intervals, where
/// t_imu_k = α_k + R_{b_k w} (v_k Δt − ½ g Δt²) recovers the IMU-frame
/// translation from the pre-integrated α using the provided frame states.
pub fn solve_translation(
    pairs: &[RelativeRotationPair],
    deltas: &[PreintegratedDelta],
    r_bc: &RotationMatrix,
    g_w: &Vec3,
    states: &[NavState],
) -> Result<TranslationSolve, ExtrinsicError> {
    if pairs.len() != deltas.len() || states.len() < pairs.len() {
        return Err(ExtrinsicError::InvalidInput(format!(
            "{} pairs, {} deltas, {} states",
            pairs.len(),
            deltas.len(),
            states.len()
        )));
    }
    let usable: Vec<usize> = (0..pairs.len())
        .filter(|&k| pairs[k].t_cam.is_some())
        .collect();
    if usable.is_empty() {
        return Err(ExtrinsicError::InvalidInput(
            "no pairs carry camera translations".into(),
        ));
    }

    let mut a = DMatrix::<f64>::zeros(3 * usable.len(), 3);
    let mut b = nalgebra::DVector::<f64>::zeros(3 * usable.len());
    for (row, &k) in usable.iter().enumerate() {
        let delta = &deltas[k];
        let state = &states[k];
        let dt = delta.dt_total;
        let r_bkw = state.q.to_rotation().transpose();
        let t_imu = delta.alpha + r_bkw.apply(&(state.v * dt - 0.5 * g_w * dt * dt));
        let r_imu = pairs[k].q_imu.to_rotation();
        let block: Mat3 = r_imu.matrix() - Mat3::identity();
        let rhs = r_bc.apply(&pairs[k].t_cam.unwrap()) - t_imu;
        a.view_mut((3 * row, 0), (3, 3)).copy_from(&block);
        for i in 0..3 {
            b[3 * row + i] = rhs[i];
        }
    }

    let svd = a.clone().svd(true, true);
    let sv = &svd.singular_values;
    let max_sv = sv.iter().cloned().fold(0.0_f64, f64::max);
    let rank = sv.iter().filter(|&&s| s > 1e-8 * max_sv.max(1.0)).count();
    if rank < 3 {
        return Err(ExtrinsicError::UnobservableTranslation { rank });
    }
    let t = svd
        .solve(&b, 1e-12)
        .map_err(|e| ExtrinsicError::InvalidInput(e.to_string()))?;
    let t_bc = Vec3::new(t[0], t[1], t[2]);
    let residual = &a * &t - &b;
    let residual_rms = (residual.norm_squared() / usable.len() as f64).sqrt();
    Ok(TranslationSolve { t_bc, residual_rms })
}

/// Whether a pose file stores camera-to-world or world-to-camera transforms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PoseConvention {
    CamToWorld,
    WorldToCam,
}

/// A timestamped camera pose.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StampedPose {
    pub t: f64,
    pub q: UnitQuaternion,
    pub trans: Vec3,
}

impl StampedPose {
    /// Normalize to camera-to-world.
    pub fn to_cam_to_world(&self, convention: PoseConvention) -> StampedPose {
        match convention {
            PoseConvention::CamToWorld => *self,
            PoseConvention::WorldToCam => StampedPose {
                t: self.t,
                q: self.q.conjugate(),
                trans: -self.q.rotate_inverse(&self.trans),
            },
        }
    }
}

/// Build the constraint pair for one frame interval from two camera poses and
/// the matching pre-integrated delta. Poses are normalized to camera-to-world
/// first; the delta must cover the pose pair's interval to within half the
/// frame period.
pub fn pair_from_camera_poses(
    pose_k: &StampedPose,
    pose_k1: &StampedPose,
    delta: &PreintegratedDelta,
    convention: PoseConvention,
    interval_id: usize,
) -> Result<RelativeRotationPair, ExtrinsicError> {
    let a = pose_k.to_cam_to_world(convention);
    let b = pose_k1.to_cam_to_world(convention);
    let period = b.t - a.t;
    if !(period > 0.0) {
        return Err(ExtrinsicError::InvalidInput(format!(
            "pose pair not in increasing time order ({} -> {})",
            a.t, b.t
        )));
    }
    let delta_end = delta.t_start + delta.dt_total;
    if (delta.t_start - a.t).abs() > 0.5 * period || (delta_end - b.t).abs() > 0.5 * period {
        return Err(ExtrinsicError::Alignment {
            delta_start: delta.t_start,
            delta_end,
            pose_start: a.t,
            pose_end: b.t,
        });
    }

    let q_cam = (a.q.conjugate() * b.q).canonicalized();
    let t_cam = a.q.rotate_inverse(&(b.trans - a.trans));
    Ok(
        RelativeRotationPair::new(relative_rotation(delta), q_cam, interval_id)
            .with_translation(t_cam),
    )
}
