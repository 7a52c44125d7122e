//! Overlapping Allan variance and the read-off of noise density / random
//! walk from the −1/2 and +1/2 deviation-slope segments.

use super::{ImuError, ImuNoiseParams};

/// One retained point of an Allan curve.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AllanPoint {
    /// Cluster time, seconds.
    pub tau: f64,
    /// Allan variance, signal-units².
    pub avar: f64,
    /// Non-overlapping clusters available at this tau (reliability measure).
    pub count: usize,
}

impl AllanPoint {
    pub fn adev(&self) -> f64 {
        self.avar.sqrt()
    }
}

/// Allan curve of one scalar series.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AllanCurve {
    pub points: Vec<AllanPoint>,
}

/// Minimum non-overlapping clusters per retained point.
pub const MIN_CLUSTERS: usize = 9;

/// Log-spaced cluster sizes from 1 up to the reliability cutoff n/9,
/// `points_per_decade` values per decade, deduplicated.
pub fn default_cluster_sizes(n_samples: usize, points_per_decade: usize) -> Vec<usize> {
    let max_m = n_samples / MIN_CLUSTERS;
    if max_m < 1 {
        return Vec::new();
    }
    let decades = (max_m as f64).log10();
    let total = (decades * points_per_decade as f64).ceil() as usize + 1;
    let mut out = Vec::with_capacity(total);
    let mut last = 0usize;
    for i in 0..=total {
        let m = 10f64.powf(i as f64 * decades / total as f64).round() as usize;
        let m = m.clamp(1, max_m);
        if m != last {
            out.push(m);
            last = m;
        }
    }
    out
}

/// Overlapping Allan variance at the requested cluster sizes:
/// σ²(τ = m·dt) = Σ_k (ȳ_{k+m} − ȳ_k)² / (2 (N − 2m + 1)) over all
/// overlapping length-m cluster means ȳ.
///
/// Cluster sizes the record is too short for are omitted and returned in the
/// second tuple element; only an empty curve is an error.
pub fn allan_variance(
    series: &[f64],
    dt: f64,
    cluster_sizes: &[usize],
) -> Result<(AllanCurve, Vec<usize>), ImuError> {
    if !(dt > 0.0) {
        return Err(ImuError::InvalidInput(format!(
            "dt must be positive, got {dt}"
        )));
    }
    let n = series.len();

    // prefix sums make each cluster mean O(1)
    let mut prefix = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    prefix.push(0.0);
    for &v in series {
        acc += v;
        prefix.push(acc);
    }

    let mut points = Vec::new();
    let mut omitted = Vec::new();
    for &m in cluster_sizes {
        if m == 0 {
            omitted.push(m);
            continue;
        }
        let count = n / m;
        if count < MIN_CLUSTERS || n < 2 * m + 1 {
            omitted.push(m);
            continue;
        }
        let pairs = n - 2 * m + 1;
        let mut sum_sq = 0.0;
        let inv_m = 1.0 / m as f64;
        for k in 0..pairs {
            let mean_a = (prefix[k + m] - prefix[k]) * inv_m;
            let mean_b = (prefix[k + 2 * m] - prefix[k + m]) * inv_m;
            let d = mean_b - mean_a;
            sum_sq += d * d;
        }
        points.push(AllanPoint {
            tau: m as f64 * dt,
            avar: sum_sq / (2.0 * pairs as f64),
            count,
        });
    }

    if points.is_empty() {
        return Err(ImuError::RecordTooShort {
            needed: cluster_sizes.iter().copied().min().unwrap_or(1) * 2 + 1,
            got: n,
        });
    }
    points.sort_by(|a, b| a.tau.partial_cmp(&b.tau).unwrap());
    Ok((AllanCurve { points }, omitted))
}

/// A fitted log-log line segment of the deviation curve.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SlopeFit {
    /// The read-off value (noise density at τ=1 s, or random walk at τ=3 s).
    pub value: f64,
    /// Fitted log10(adev) / log10(τ) slope.
    pub slope: f64,
    /// RMS residual of the fit in log10 space.
    pub residual_rms: f64,
    pub tau_min: f64,
    pub tau_max: f64,
    pub n_points: usize,
}

/// Per-axis identification result; a missing regime leaves its field `None`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AxisNoiseFit {
    pub noise_density: Option<SlopeFit>,
    pub random_walk: Option<SlopeFit>,
}

/// Maximum accepted fit residual in log10 space.
const MAX_FIT_RESIDUAL: f64 = 0.1;
/// Local-slope gate around the target slope when selecting a segment.
const SLOPE_GATE: f64 = 0.15;
/// Minimum points a segment needs to be fit.
const MIN_SEGMENT_POINTS: usize = 4;

/// Identify noise density and random walk from one axis' Allan curve.
///
/// The −1/2 segment is fit in log-log space and evaluated at τ = 1 s to give
/// the noise density. The white contribution N²/τ is then subtracted from
/// the variance curve and the remaining +1/2 segment is fit and evaluated at
/// τ = 3 s, the standard random-walk read-off.
pub fn fit_axis_noise(curve: &AllanCurve) -> AxisNoiseFit {
    let log_pts: Vec<(f64, f64)> = curve
        .points
        .iter()
        .filter(|p| p.avar > 0.0)
        .map(|p| (p.tau.log10(), 0.5 * p.avar.log10()))
        .collect();

    // white noise: slope −1/2 at small tau (cap at 10 s so the walk side
    // cannot leak into the segment)
    let white = fit_segment(
        &log_pts
            .iter()
            .copied()
            .filter(|(lt, _)| *lt <= 1.0)
            .collect::<Vec<_>>(),
        -0.5,
        0.0, // evaluate at log10(tau) = 0  ->  tau = 1 s
    );

    let n_hat = white.map(|f| f.value).unwrap_or(0.0);

    // random walk: subtract the identified white part from the variance and
    // fit the +1/2 regime on what remains. Points where the subtraction
    // removes most of the power are noise-dominated and excluded; the rest
    // are weighted by their cluster count.
    // the discrete walk's Allan variance carries a 1/(2m²) correction that
    // flattens the curve at small cluster sizes; stay at m >= 16 where it is
    // below 0.2%
    let tau_floor = 16.0 * curve.points.first().map(|p| p.tau).unwrap_or(0.0);
    let corrected: Vec<(f64, f64, f64)> = curve
        .points
        .iter()
        .filter(|p| p.tau >= tau_floor)
        .filter_map(|p| {
            let white_part = n_hat * n_hat / p.tau;
            let remainder = p.avar - white_part;
            if remainder > 0.0 && remainder >= 0.25 * p.avar {
                Some((p.tau.log10(), 0.5 * remainder.log10(), p.count as f64))
            } else {
                None
            }
        })
        .collect();

    let walk = fit_region(&corrected, 0.5, 3f64.log10());

    AxisNoiseFit {
        noise_density: white,
        random_walk: walk,
    }
}

/// Slope sanity gate for an identified region: far looser than the white
/// segment gate because a single random-walk realization's Allan curve can
/// sag or bulge well away from +1/2 over a short record.
const REGION_SLOPE_GATE: f64 = 0.3;

/// Fit an already-selected, count-weighted point set against a target slope:
/// the free-line slope is the diagnostic, the read-off value comes from the
/// slope-constrained fit (robust to extrapolation over the curve's span).
fn fit_region(pts: &[(f64, f64, f64)], target_slope: f64, eval_log_tau: f64) -> Option<SlopeFit> {
    if pts.len() < MIN_SEGMENT_POINTS {
        return None;
    }
    let span = pts.last().unwrap().0 - pts.first().unwrap().0;
    if span < 0.3 {
        return None;
    }
    let wsum: f64 = pts.iter().map(|p| p.2).sum();
    let mx: f64 = pts.iter().map(|p| p.2 * p.0).sum::<f64>() / wsum;
    let my: f64 = pts.iter().map(|p| p.2 * p.1).sum::<f64>() / wsum;
    let sxx: f64 = pts.iter().map(|p| p.2 * (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = pts.iter().map(|p| p.2 * (p.0 - mx) * (p.1 - my)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual_rms = (pts
        .iter()
        .map(|(x, y, w)| {
            let r = y - (slope * x + intercept);
            w * r * r
        })
        .sum::<f64>()
        / wsum)
        .sqrt();
    if (slope - target_slope).abs() > REGION_SLOPE_GATE || residual_rms > MAX_FIT_RESIDUAL {
        return None;
    }
    // slope-constrained intercept: weighted mean of (y - target_slope x)
    let constrained: f64 = pts
        .iter()
        .map(|(x, y, w)| w * (y - target_slope * x))
        .sum::<f64>()
        / wsum;
    Some(SlopeFit {
        value: 10f64.powf(target_slope * eval_log_tau + constrained),
        slope,
        residual_rms,
        tau_min: 10f64.powf(pts.first().unwrap().0),
        tau_max: 10f64.powf(pts.last().unwrap().0),
        n_points: pts.len(),
    })
}

/// Find the longest contiguous run of points whose local slope stays within
/// `SLOPE_GATE` of the target, fit a free line through it and evaluate at
/// `eval_log_tau`. Returns `None` when no acceptable segment exists.
fn fit_segment(log_pts: &[(f64, f64)], target_slope: f64, eval_log_tau: f64) -> Option<SlopeFit> {
    if log_pts.len() < MIN_SEGMENT_POINTS {
        return None;
    }

    // local slope by symmetric difference over a +-2 neighborhood
    let local_slope = |i: usize| -> f64 {
        let lo = i.saturating_sub(2);
        let hi = (i + 2).min(log_pts.len() - 1);
        line_fit(&log_pts[lo..=hi]).0
    };

    let ok: Vec<bool> = (0..log_pts.len())
        .map(|i| (local_slope(i) - target_slope).abs() <= SLOPE_GATE)
        .collect();

    // longest contiguous accepted run
    let mut best: Option<(usize, usize)> = None;
    let mut start = None;
    for i in 0..=ok.len() {
        match (start, i < ok.len() && ok[i]) {
            (None, true) => start = Some(i),
            (Some(s), false) => {
                if best.map_or(true, |(bs, be)| i - s > be - bs) {
                    best = Some((s, i));
                }
                start = None;
            }
            _ => {}
        }
    }
    let (s, e) = best?;
    if e - s < MIN_SEGMENT_POINTS {
        return None;
    }

    let seg = &log_pts[s..e];
    let (slope, intercept) = line_fit(seg);
    let residual_rms = (seg
        .iter()
        .map(|(x, y)| {
            let r = y - (slope * x + intercept);
            r * r
        })
        .sum::<f64>()
        / seg.len() as f64)
        .sqrt();
    if residual_rms > MAX_FIT_RESIDUAL {
        return None;
    }

    Some(SlopeFit {
        value: 10f64.powf(slope * eval_log_tau + intercept),
        slope,
        residual_rms,
        tau_min: 10f64.powf(seg.first().unwrap().0),
        tau_max: 10f64.powf(seg.last().unwrap().0),
        n_points: seg.len(),
    })
}

/// Least-squares line y = a x + b; returns (a, b).
fn line_fit(pts: &[(f64, f64)]) -> (f64, f64) {
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let denom = n * sxx - sx * sx;
    if denom.abs() < 1e-300 {
        return (0.0, sy / n);
    }
    let a = (n * sxy - sx * sy) / denom;
    let b = (sy - a * sx) / n;
    (a, b)
}

/// Full identification report for a gyro + accel pair, three axes each.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NoiseFitReport {
    pub gyro: [AxisNoiseFit; 3],
    pub accel: [AxisNoiseFit; 3],
}

impl NoiseFitReport {
    /// Mean over axes where the regime was identified.
    fn mean_over(fits: &[AxisNoiseFit; 3], walk: bool) -> Option<f64> {
        let values: Vec<f64> = fits
            .iter()
            .filter_map(|f| if walk { f.random_walk } else { f.noise_density })
            .map(|f| f.value)
            .collect();
        if values.len() == 3 {
            Some(values.iter().sum::<f64>() / 3.0)
        } else {
            None
        }
    }

    /// Assemble `ImuNoiseParams` from the per-axis means; fails naming the
    /// first sensor/axis whose regime could not be identified.
    pub fn to_noise_params(&self) -> Result<ImuNoiseParams, ImuError> {
        for (sensor, fits) in [("gyro", &self.gyro), ("accel", &self.accel)] {
            for (axis, f) in ["x", "y", "z"].iter().zip(fits.iter()) {
                if f.noise_density.is_none() {
                    return Err(ImuError::UnidentifiableRegime {
                        sensor: sensor.into(),
                        axis: (*axis).into(),
                        regime: "white-noise (-1/2 slope)".into(),
                    });
                }
                if f.random_walk.is_none() {
                    return Err(ImuError::UnidentifiableRegime {
                        sensor: sensor.into(),
                        axis: (*axis).into(),
                        regime: "random-walk (+1/2 slope)".into(),
                    });
                }
            }
        }
        ImuNoiseParams::new(
            Self::mean_over(&self.accel, false).unwrap(),
            Self::mean_over(&self.gyro, false).unwrap(),
            Self::mean_over(&self.accel, true).unwrap(),
            Self::mean_over(&self.gyro, true).unwrap(),
            None,
        )
    }
}

/// Fit both sensors from per-axis Allan curves.
pub fn fit_noise_params(
    gyro_curves: &[AllanCurve; 3],
    accel_curves: &[AllanCurve; 3],
) -> NoiseFitReport {
    NoiseFitReport {
        gyro: [
            fit_axis_noise(&gyro_curves[0]),
            fit_axis_noise(&gyro_curves[1]),
            fit_axis_noise(&gyro_curves[2]),
        ],
        accel: [
            fit_axis_noise(&accel_curves[0]),
            fit_axis_noise(&accel_curves[1]),
            fit_axis_noise(&accel_curves[2]),
        ],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    fn white_series(sigma_d: f64, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = StdRng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                sigma_d * z
            })
            .collect()
    }

    fn walk_series(sigma_step: f64, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = StdRng::seed_from_u64(seed);
        let mut acc = 0.0;
        (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                acc += sigma_step * z;
                acc
            })
            .collect()
    }

    #[test]
    fn constant_signal_has_zero_avar() {
        let series = vec![3.25; 20_000];
        let (curve, _) =
            allan_variance(&series, 0.005, &default_cluster_sizes(20_000, 10)).unwrap();
        assert!(!curve.points.is_empty());
        assert!(curve.points.iter().all(|p| p.avar == 0.0));
    }

    #[test]
    fn too_short_record_omits_large_taus() {
        let series = vec![0.0; 1000];
        // m = 400 needs 9 clusters -> 3600 samples; omitted
        let (curve, omitted) = allan_variance(&series, 0.01, &[10, 400]).unwrap();
        assert_eq!(curve.points.len(), 1);
        assert_eq!(omitted, vec![400]);
        // nothing feasible at all -> error
        assert!(allan_variance(&series, 0.01, &[400]).is_err());
    }

    #[test]
    fn white_noise_follows_inverse_tau_law() {
        // discrete sigma_d: avar(tau) = sigma_d² dt / tau; deviation slope −1/2
        let dt = 0.005; // 200 Hz
        let n = 720_000; // 1 h
        let sigma_d = 0.3;
        let series = white_series(sigma_d, n, 7);
        let sizes = default_cluster_sizes(n, 20);
        let (curve, _) = allan_variance(&series, dt, &sizes).unwrap();

        for p in curve.points.iter().filter(|p| p.tau < 10.0) {
            let expected = sigma_d * sigma_d * dt / p.tau;
            assert!(
                (p.avar / expected - 1.0).abs() < 0.1,
                "tau {}: avar {:.3e} vs {:.3e}",
                p.tau,
                p.avar,
                expected
            );
        }

        let fit = fit_axis_noise(&curve);
        let white = fit.noise_density.expect("white regime identifiable");
        assert!(
            (white.slope + 0.5).abs() < 0.05,
            "white slope {}",
            white.slope
        );
        // continuous density = sigma_d * sqrt(dt), read at tau = 1 s
        let density = sigma_d * dt.sqrt();
        assert!(
            (white.value / density - 1.0).abs() < 0.05,
            "density {} vs {}",
            white.value,
            density
        );
        // pure white: the walk regime must be flagged unidentifiable
        assert!(fit.random_walk.is_none());
    }

    #[test]
    fn random_walk_follows_tau_law() {
        // increments sigma_step = sigma_b sqrt(dt): avar(tau) = sigma_b² tau / 3
        let dt = 0.005_f64;
        let n = 720_000;
        let sigma_b = 3.4230e-4;
        let series = walk_series(sigma_b * dt.sqrt(), n, 8);
        let sizes = default_cluster_sizes(n, 20);
        let (curve, _) = allan_variance(&series, dt, &sizes).unwrap();

        let fit = fit_axis_noise(&curve);
        let walk = fit.random_walk.expect("walk regime identifiable");
        assert!((walk.slope - 0.5).abs() < 0.05, "walk slope {}", walk.slope);
        assert!(
            (walk.value / sigma_b - 1.0).abs() < 0.15,
            "walk {} vs {}",
            walk.value,
            sigma_b
        );
    }

    #[test]
    fn mixture_is_pointwise_sum_where_one_dominates() {
        let dt = 0.005_f64;
        let n = 720_000;
        let sigma_d = 0.28;
        let sigma_b = 3.4e-4;
        let white = white_series(sigma_d, n, 9);
        let walk = walk_series(sigma_b * dt.sqrt(), n, 10);
        let mix: Vec<f64> = white.iter().zip(&walk).map(|(a, b)| a + b).collect();
        let sizes = default_cluster_sizes(n, 20);
        let (c_mix, _) = allan_variance(&mix, dt, &sizes).unwrap();
        let (c_white, _) = allan_variance(&white, dt, &sizes).unwrap();
        let (c_walk, _) = allan_variance(&walk, dt, &sizes).unwrap();

        for ((pm, pw), pk) in c_mix.points.iter().zip(&c_white.points).zip(&c_walk.points) {
            let dominant = pw.avar.max(pk.avar);
            let minor = pw.avar.min(pk.avar);
            if dominant >= 10.0 * minor {
                let sum = pw.avar + pk.avar;
                assert!(
                    (pm.avar / sum - 1.0).abs() < 0.1,
                    "tau {}: mixture {:.3e} vs sum {:.3e}",
                    pm.tau,
                    pm.avar,
                    sum
                );
            }
        }
    }

    #[test]
    fn cluster_size_grid_is_sane() {
        let sizes = default_cluster_sizes(1_440_000, 20);
        assert_eq!(sizes[0], 1);
        assert!(*sizes.last().unwrap() <= 1_440_000 / 9);
        assert!(sizes.windows(2).all(|w| w[0] < w[1]));
        assert!(default_cluster_sizes(5, 20).len() <= 1);
    }
}
