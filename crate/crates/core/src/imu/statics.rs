//! Static-interval detection for the multi-position calibration procedure.

use super::{validate_recording, ImuError, ImuSample};
use crate::geometry::Vec3;

#[derive(Debug, Clone, Copy)]
pub struct StaticDetectorConfig {
    /// Rolling-variance window, seconds.
    pub window: f64,
    /// A window is static when its accel variance is below
    /// `threshold_factor` times the quietest window's variance.
    pub threshold_factor: f64,
    /// Intervals shorter than this are discarded, seconds.
    pub min_duration: f64,
    /// Physical gate: the mean gyro magnitude of a static interval, rad/s.
    pub max_static_gyro: f64,
}

impl Default for StaticDetectorConfig {
    fn default() -> Self {
        Self {
            window: 1.0,
            threshold_factor: 10.0,
            min_duration: 1.0,
            max_static_gyro: 0.05,
        }
    }
}

/// Detect static intervals: windows whose accel-magnitude variance stays
/// below `threshold_factor` times the quietest window (the noise floor),
/// gated by a physical stillness check on the gyro so a fully dynamic
/// recording cannot pass off its calmest stretch as static.
pub fn detect_static_intervals(
    samples: &[ImuSample],
    config: &StaticDetectorConfig,
) -> Result<Vec<(f64, f64)>, ImuError> {
    validate_recording(samples)?;
    if samples.len() < 3 {
        return Err(ImuError::RecordTooShort {
            needed: 3,
            got: samples.len(),
        });
    }
    let duration = samples.last().unwrap().t - samples[0].t;
    let dt = duration / (samples.len() - 1) as f64;
    let win = ((config.window / dt).round() as usize).max(4);
    if samples.len() < 2 * win {
        return Err(ImuError::RecordTooShort {
            needed: 2 * win,
            got: samples.len(),
        });
    }

    // per-window accel variance summed over components, two-pass so the
    // g-sized mean cancels exactly (prefix-sum variance loses all its digits
    // on noise-free data); component variance rather than |accel| variance
    // because pure rotation keeps the magnitude pinned at g. Every window
    // start is scanned: a static exactly min_duration long has a single
    // fully-quiet window, which a coarser grid would miss.
    let n = samples.len();
    let hop = 1;
    let variance_at = |k: usize| -> f64 {
        let mut mean = Vec3::zeros();
        for s in &samples[k..k + win] {
            mean += s.accel;
        }
        mean /= win as f64;
        let mut acc = 0.0;
        for s in &samples[k..k + win] {
            let d = s.accel - mean;
            acc += d.norm_squared();
        }
        acc / win as f64
    };
    let window_starts: Vec<usize> = (0..=n - win).step_by(hop).collect();

    let mut floor = f64::INFINITY;
    for &k in &window_starts {
        floor = floor.min(variance_at(k));
    }
    // the quietest window still has sensor noise; keep the threshold away
    // from exact zero on noise-free synthetic data
    let threshold = config.threshold_factor * floor.max(1e-12);

    // a sample is static when it belongs to at least one fully quiet window,
    // so static runs keep their true extent right up to the motion boundary
    let mut cover = vec![0i32; samples.len() + 1];
    for &k in &window_starts {
        if variance_at(k) < threshold {
            cover[k] += 1;
            cover[k + win] -= 1;
        }
    }
    let mut is_static = vec![false; samples.len()];
    let mut acc_cover = 0i32;
    for i in 0..samples.len() {
        acc_cover += cover[i];
        is_static[i] = acc_cover > 0;
    }

    // gather runs, apply duration and gyro gates
    let mut intervals = Vec::new();
    let mut start: Option<usize> = None;
    for i in 0..=samples.len() {
        let flag = i < samples.len() && is_static[i];
        match (start, flag) {
            (None, true) => start = Some(i),
            (Some(s), false) => {
                let e = i - 1;
                let t0 = samples[s].t;
                let t1 = samples[e].t;
                // spans are inclusive of both endpoint samples
                if t1 - t0 + dt >= config.min_duration {
                    let mean_gyro = mean_gyro(&samples[s..=e]);
                    if mean_gyro.norm() <= config.max_static_gyro {
                        intervals.push((t0, t1));
                    }
                }
                start = None;
            }
            _ => {}
        }
    }

    if intervals.is_empty() {
        return Err(ImuError::NoStaticIntervals);
    }
    Ok(intervals)
}

fn mean_gyro(samples: &[ImuSample]) -> Vec3 {
    let sum: Vec3 = samples.iter().map(|s| s.gyro).sum();
    sum / samples.len() as f64
}

/// Mean accel/gyro over a static interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StaticIntervalStats {
    pub t_start: f64,
    pub t_end: f64,
    pub mean_accel: Vec3,
    pub mean_gyro: Vec3,
    pub n_samples: usize,
}

/// Per-interval means, trimming a small margin at both ends so transients at
/// the motion boundaries do not contaminate the averages.
pub fn static_interval_stats(
    samples: &[ImuSample],
    intervals: &[(f64, f64)],
    trim: f64,
) -> Vec<StaticIntervalStats> {
    intervals
        .iter()
        .map(|&(t0, t1)| {
            let margin = trim.min((t1 - t0) * 0.25);
            let (a, b) = (t0 + margin, t1 - margin);
            let slice: Vec<&ImuSample> = samples.iter().filter(|s| s.t >= a && s.t <= b).collect();
            let n = slice.len().max(1) as f64;
            let mean_accel = slice.iter().map(|s| s.accel).sum::<Vec3>() / n;
            let mean_gyro = slice.iter().map(|s| s.gyro).sum::<Vec3>() / n;
            StaticIntervalStats {
                t_start: t0,
                t_end: t1,
                mean_accel,
                mean_gyro,
                n_samples: slice.len(),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imu::STANDARD_GRAVITY;
    use rand::rngs::StdRng;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    const G: f64 = STANDARD_GRAVITY;

    /// Static gravity readings with light noise; motion segments add large
    /// accel wobble and rotation.
    fn synthetic(pattern: &[(bool, f64)], rate: f64, seed: u64) -> Vec<ImuSample> {
        let mut rng = StdRng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 0.02).unwrap();
        let dt = 1.0 / rate;
        let mut t = 0.0;
        let mut out = Vec::new();
        for &(is_static, dur) in pattern {
            let n = (dur * rate).round() as usize;
            for i in 0..n {
                let (accel, gyro) = if is_static {
                    (
                        Vec3::new(
                            noise.sample(&mut rng),
                            noise.sample(&mut rng),
                            G + noise.sample(&mut rng),
                        ),
                        Vec3::zeros(),
                    )
                } else {
                    let phase = i as f64 * dt * 8.0;
                    (
                        Vec3::new(
                            3.0 * phase.sin() + noise.sample(&mut rng),
                            2.0 * phase.cos(),
                            G + 2.5 * (phase * 1.3).sin(),
                        ),
                        Vec3::new(1.2 * phase.cos(), 0.8 * phase.sin(), 0.5),
                    )
                };
                out.push(ImuSample::new(t, accel, gyro));
                t += dt;
            }
        }
        out
    }

    #[test]
    fn fully_static_is_one_interval() {
        let samples = synthetic(&[(true, 30.0)], 200.0, 1);
        let intervals =
            detect_static_intervals(&samples, &StaticDetectorConfig::default()).unwrap();
        assert_eq!(intervals.len(), 1);
        let (t0, t1) = intervals[0];
        assert!(t0 < 1.0 && t1 > 28.0, "interval ({t0}, {t1})");
    }

    #[test]
    fn fully_dynamic_is_error() {
        let samples = synthetic(&[(false, 30.0)], 200.0, 2);
        assert!(matches!(
            detect_static_intervals(&samples, &StaticDetectorConfig::default()),
            Err(ImuError::NoStaticIntervals)
        ));
    }

    #[test]
    fn rotate_and_hold_pattern_counts_fifty_one() {
        // 50 s static, then (3 s motion + 1.2 s static) x 50
        let mut pattern = vec![(true, 50.0)];
        for _ in 0..50 {
            pattern.push((false, 3.0));
            pattern.push((true, 1.2));
        }
        let samples = synthetic(&pattern, 200.0, 3);
        let config = StaticDetectorConfig::default();
        let intervals = detect_static_intervals(&samples, &config).unwrap();
        assert_eq!(intervals.len(), 51, "got {} intervals", intervals.len());

        // boundary accuracy: first interval starts at 0 and ends near 50 s
        let (t0, t1) = intervals[0];
        let two_windows = 2.0 * config.window;
        assert!(t0 <= two_windows);
        assert!((t1 - 50.0).abs() <= two_windows, "end {t1}");
        // subsequent statics land on the 50 + k*4.2 grid
        let (s1_start, _) = intervals[1];
        assert!((s1_start - 53.0).abs() <= two_windows, "start {s1_start}");
    }

    #[test]
    fn interval_means_trim_edges() {
        let samples = synthetic(&[(true, 10.0)], 200.0, 4);
        let stats = static_interval_stats(&samples, &[(0.0, 10.0)], 0.5);
        assert_eq!(stats.len(), 1);
        assert!((stats[0].mean_accel - Vec3::new(0.0, 0.0, G)).norm() < 0.02);
        assert!(stats[0].n_samples > 1500);
    }
}
