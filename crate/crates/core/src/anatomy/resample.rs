use nalgebra::Vector3;
use serde::Serialize;

use super::{SwaySample, SwayTrajectory};
use crate::error::{Error, Result};

/// Linear interpolation onto a uniform `target_hz` timebase over the same time span.
///
/// An output sample is valid only if both bracketing input samples are.
pub fn resample_linear(series: &SwayTrajectory, target_hz: f64) -> Result<SwayTrajectory> {
    if !(target_hz > 0.0) || !target_hz.is_finite() {
        return Err(Error::InvalidParameter(format!("target rate must be positive, got {target_hz}")));
    }
    if series.is_empty() {
        return Err(Error::SeriesTooShort { found: 0, required: 2 });
    }
    let n_in = series.len();
    let ratio = series.rate_hz() / target_hz;
    let span = (n_in - 1) as f64 / series.rate_hz();
    let n_out = (span * target_hz + 1e-9).floor() as usize + 1;
    let (input, valid_in) = (series.samples(), series.valid());

    let mut samples = Vec::with_capacity(n_out);
    let mut valid = Vec::with_capacity(n_out);
    for k in 0..n_out {
        let mut s = k as f64 * ratio;
        if (s - s.round()).abs() < 1e-9 {
            s = s.round();
        }
        let i = (s.floor() as usize).min(n_in - 1);
        let frac = s - i as f64;
        if frac == 0.0 || i + 1 >= n_in {
            samples.push(input[i]);
            valid.push(valid_in[i]);
        } else if valid_in[i] && valid_in[i + 1] {
            samples.push(input[i] * (1.0 - frac) + input[i + 1] * frac);
            valid.push(true);
        } else {
            samples.push(Vector3::repeat(f64::NAN));
            valid.push(false);
        }
    }
    SwayTrajectory::with_start(target_hz, series.start_sec(), series.segment(), samples, valid)
}

/// Outcome of [`interpolate_gaps`]. Ranges are half-open sample indices.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct GapReport {
    pub filled: Vec<std::ops::Range<usize>>,
    /// Interior gaps longer than the limit.
    pub too_long: Vec<std::ops::Range<usize>>,
    pub leading: Option<std::ops::Range<usize>>,
    pub trailing: Option<std::ops::Range<usize>>,
}

impl GapReport {
    pub fn unfilled_samples(&self) -> usize {
        self.too_long.iter().map(|r| r.len()).sum::<usize>()
            + self.leading.as_ref().map_or(0, |r| r.len())
            + self.trailing.as_ref().map_or(0, |r| r.len())
    }
}

/// Linearly bridges interior gaps of at most `max_gap_sec` (missing samples over the rate).
///
/// Longer gaps and gaps touching either end stay invalid and are reported.
pub fn interpolate_gaps(series: &SwayTrajectory, max_gap_sec: f64) -> Result<(SwayTrajectory, GapReport)> {
    if !(max_gap_sec >= 0.0) {
        return Err(Error::InvalidParameter(format!("maximum gap must be non-negative, got {max_gap_sec}")));
    }
    let mut samples: Vec<SwaySample> = series.samples().to_vec();
    let mut valid = series.valid().to_vec();
    let runs = series.valid_runs();
    let mut report = GapReport::default();
    let n = series.len();

    if runs.is_empty() {
        if n > 0 {
            report.leading = Some(0..n);
            log::warn!("{} trajectory has no valid samples", series.segment());
        }
        return Ok((series.clone(), report));
    }
    if runs[0].start > 0 {
        report.leading = Some(0..runs[0].start);
    }
    let last = runs[runs.len() - 1].end;
    if last < n {
        report.trailing = Some(last..n);
    }
    for pair in runs.windows(2) {
        let (left, right) = (pair[0].end - 1, pair[1].start);
        let gap = pair[0].end..right;
        if gap.len() as f64 / series.rate_hz() > max_gap_sec + 1e-12 {
            report.too_long.push(gap);
            continue;
        }
        let (a, b) = (series.samples()[left], series.samples()[right]);
        let span = (right - left) as f64;
        for k in gap.clone() {
            let f = (k - left) as f64 / span;
            samples[k] = a * (1.0 - f) + b * f;
            valid[k] = true;
        }
        report.filled.push(gap);
    }
    if report.leading.is_some() || report.trailing.is_some() {
        log::warn!(
            "{} trajectory: {} leading and {} trailing samples cannot be interpolated",
            series.segment(),
            report.leading.as_ref().map_or(0, |r| r.len()),
            report.trailing.as_ref().map_or(0, |r| r.len())
        );
    }
    for r in &report.too_long {
        log::warn!(
            "{} trajectory: gap of {} samples at index {} exceeds {max_gap_sec} s",
            series.segment(),
            r.len(),
            r.start
        );
    }
    Ok((series.with_data(samples, valid), report))
}

#[cfg(test)]
mod tests {
    use super::super::Segment;
    use super::*;
    use std::f64::consts::PI;

    fn sampled(f: impl Fn(f64) -> f64, rate: f64, n: usize) -> SwayTrajectory {
        let s = (0..n).map(|k| Vector3::repeat(f(k as f64 / rate))).collect();
        SwayTrajectory::from_samples(rate, Segment::Upper, s).unwrap()
    }

    #[test]
    fn same_rate_is_identity() {
        let s = sampled(|t| (t * 1.7).sin(), 30.0, 100);
        let r = resample_linear(&s, 30.0).unwrap();
        assert_eq!(r, s);
    }

    #[test]
    fn ramp_is_exact() {
        let s = sampled(|t| 3.0 * t - 1.0, 120.0, 1201);
        let r = resample_linear(&s, 30.0).unwrap();
        assert_eq!(r.len(), 301);
        for k in 0..r.len() {
            let t = k as f64 / 30.0;
            assert!((r.samples()[k].x - (3.0 * t - 1.0)).abs() < 1e-12);
        }
        let up = resample_linear(&sampled(|t| 2.0 * t, 30.0, 31), 120.0).unwrap();
        assert_eq!(up.len(), 121);
        for k in 0..up.len() {
            assert!((up.samples()[k].x - 2.0 * k as f64 / 120.0).abs() < 1e-12);
        }
    }

    #[test]
    fn sine_error_within_interpolation_bound() {
        let (f, a) = (0.4, 8.0);
        let sine = |t: f64| a * (2.0 * PI * f * t).sin();
        // Upsampling from a coarse grid interpolates between samples.
        let coarse = sampled(sine, 7.0, 141);
        let r = resample_linear(&coarse, 30.0).unwrap();
        let h = 1.0 / 7.0;
        let bound = h * h * a * (2.0 * PI * f).powi(2) / 8.0;
        let mut worst: f64 = 0.0;
        for k in 0..r.len() {
            worst = worst.max((r.samples()[k].x - sine(r.time(k))).abs());
        }
        assert!(worst <= bound, "{worst} > {bound}");
        let down = resample_linear(&sampled(sine, 120.0, 2401), 30.0).unwrap();
        for k in 0..down.len() {
            assert!((down.samples()[k].x - sine(k as f64 / 30.0)).abs() <= (1.0f64 / 120.0).powi(2) * a * (2.0 * PI * f).powi(2) / 8.0);
        }
    }

    #[test]
    fn invalid_neighbors_propagate() {
        let mut valid = vec![true; 9];
        valid[4] = false;
        let s = SwayTrajectory::new(8.0, Segment::Upper, vec![Vector3::zeros(); 9], valid).unwrap();
        let r = resample_linear(&s, 6.0).unwrap();
        // Output times 0, 1/6, ... hit input positions 0, 1.33, 2.67, 4, 5.33, 6.67, 8.
        assert_eq!(r.valid(), &[true, true, true, false, true, true, true]);
    }

    #[test]
    fn empty_input() {
        let s = SwayTrajectory::from_samples(30.0, Segment::Upper, vec![]).unwrap();
        assert!(resample_linear(&s, 30.0).is_err());
    }

    fn with_mask(values: &[f64], valid: &[bool]) -> SwayTrajectory {
        let s = values.iter().map(|v| Vector3::repeat(*v)).collect();
        SwayTrajectory::new(10.0, Segment::Lower, s, valid.to_vec()).unwrap()
    }

    #[test]
    fn no_gaps_unchanged() {
        let s = with_mask(&[1.0, 2.0, 3.0], &[true; 3]);
        let (out, report) = interpolate_gaps(&s, 0.5).unwrap();
        assert_eq!(out, s);
        assert_eq!(report, GapReport::default());
    }

    #[test]
    fn single_sample_gap_filled() {
        let s = with_mask(&[1.0, f64::NAN, 3.0], &[true, false, true]);
        let (out, report) = interpolate_gaps(&s, 0.5).unwrap();
        assert_eq!(out.samples()[1], Vector3::repeat(2.0));
        assert!(out.valid()[1]);
        assert_eq!(report.filled, vec![1..2]);
    }

    #[test]
    fn long_and_edge_gaps_remain() {
        let nan = f64::NAN;
        let values = [nan, 1.0, nan, nan, nan, nan, nan, nan, 2.0, nan];
        let valid = [false, true, false, false, false, false, false, false, true, false];
        let s = with_mask(&values, &valid);
        let (out, report) = interpolate_gaps(&s, 0.3).unwrap();
        assert_eq!(out.valid(), s.valid());
        assert_eq!(report.too_long, vec![2..8]);
        assert_eq!(report.leading, Some(0..1));
        assert_eq!(report.trailing, Some(9..10));
        assert_eq!(report.unfilled_samples(), 8);
    }
}
