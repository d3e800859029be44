use nalgebra::{DMatrix, DVector};

use super::{SwaySample, SwayTrajectory};
use crate::error::{Error, Result};

pub const DEFAULT_WINDOW_SEC: f64 = 0.5;
pub const DEFAULT_ORDER: usize = 2;

/// Window length in samples: `window_sec * rate_hz` rounded up to the next odd count.
pub fn window_length(window_sec: f64, rate_hz: f64) -> Result<usize> {
    if !(window_sec > 0.0) || !(rate_hz > 0.0) || !(window_sec * rate_hz).is_finite() {
        return Err(Error::InvalidParameter(format!(
            "window {window_sec} s at {rate_hz} Hz is not a valid smoothing window"
        )));
    }
    let n = (window_sec * rate_hz - 1e-9).ceil().max(1.0) as usize;
    Ok(if n.is_multiple_of(2) { n + 1 } else { n })
}

/// Weights `w` such that `sum w_j y_j` is the value at offset `at` of the
/// least-squares polynomial of degree `order` through samples at offsets
/// `first..first + len`.
pub fn savitzky_golay_coefficients(first: isize, len: usize, order: usize, at: isize) -> Result<DVector<f64>> {
    if order >= len {
        return Err(Error::InvalidParameter(format!(
            "polynomial order {order} needs more than {len} samples"
        )));
    }
    let a = DMatrix::from_fn(len, order + 1, |i, p| ((first + i as isize - at) as f64).powi(p as i32));
    let pinv = a
        .pseudo_inverse(1e-12)
        .map_err(|e| Error::Degenerate(format!("smoothing design matrix: {e}")))?;
    Ok(pinv.row(0).transpose())
}

/// Savitzky-Golay smoothing of each axis.
///
/// Every contiguous run of valid samples is filtered on its own. Samples within
/// half a window of a run end use the polynomial fitted to the part of their
/// centered window that lies inside the run. Runs too short for the polynomial
/// order are copied unchanged.
pub fn savitzky_golay(series: &SwayTrajectory, window_sec: f64, order: usize) -> Result<SwayTrajectory> {
    let n = window_length(window_sec, series.rate_hz())?;
    if order >= n {
        return Err(Error::InvalidParameter(format!(
            "polynomial order {order} must be below the window length {n}"
        )));
    }
    if series.len() < n {
        return Err(Error::SeriesTooShort {
            found: series.len(),
            required: n,
        });
    }
    let half = (n / 2) as isize;
    let interior = savitzky_golay_coefficients(-half, n, order, 0)?;
    let mut out: Vec<SwaySample> = series.samples().to_vec();
    let input = series.samples();

    for run in series.valid_runs() {
        let (a, b) = (run.start as isize, run.end as isize);
        if run.len() <= order {
            continue;
        }
        for i in a..b {
            let lo = (i - half).max(a);
            let hi = (i + half).min(b - 1);
            let len = (hi - lo + 1) as usize;
            let owned;
            let w = if len == n {
                &interior
            } else {
                owned = savitzky_golay_coefficients(lo - i, len, order.min(len - 1), 0)?;
                &owned
            };
            let mut acc = SwaySample::zeros();
            for (j, wj) in w.iter().enumerate() {
                acc += input[lo as usize + j] * *wj;
            }
            out[i as usize] = acc;
        }
    }
    Ok(series.with_data(out, series.valid().to_vec()))
}

#[cfg(test)]
mod tests {
    use super::super::Segment;
    use super::*;
    use nalgebra::Vector3;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn series(f: impl Fn(f64) -> f64, n: usize, rate: f64) -> SwayTrajectory {
        let samples = (0..n)
            .map(|k| {
                let t = k as f64 / rate;
                Vector3::new(f(t), 2.0 * f(t) - 1.0, -f(t))
            })
            .collect();
        SwayTrajectory::from_samples(rate, Segment::Upper, samples).unwrap()
    }

    /// Least-squares polynomial through `(x, y)` evaluated at `x0`, by normal
    /// equations and Gaussian elimination.
    fn polyfit_eval(x: &[f64], y: &[f64], order: usize, x0: f64) -> f64 {
        let m = order + 1;
        let mut a = vec![vec![0.0; m + 1]; m];
        for (xi, yi) in x.iter().zip(y) {
            let d = xi - x0;
            for r in 0..m {
                for c in 0..m {
                    a[r][c] += d.powi((r + c) as i32);
                }
                a[r][m] += yi * d.powi(r as i32);
            }
        }
        for col in 0..m {
            let piv = (col..m).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
            a.swap(col, piv);
            for r in 0..m {
                if r != col {
                    let f = a[r][col] / a[col][col];
                    for c in col..=m {
                        a[r][c] -= f * a[col][c];
                    }
                }
            }
        }
        a[0][m] / a[0][0]
    }

    #[test]
    fn window_rounding() {
        assert_eq!(window_length(0.5, 30.0).unwrap(), 15);
        assert_eq!(window_length(0.5, 120.0).unwrap(), 61);
        assert_eq!(window_length(0.5, 100.0).unwrap(), 51);
        assert_eq!(window_length(0.1, 20.0).unwrap(), 3);
        assert!(window_length(0.0, 30.0).is_err());
    }

    #[test]
    fn known_five_point_quadratic_weights() {
        let w = savitzky_golay_coefficients(-2, 5, 2, 0).unwrap();
        let expected = [-3.0, 12.0, 17.0, 12.0, -3.0].map(|v| v / 35.0);
        for (a, b) in w.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_is_unchanged() {
        let s = series(|_| 4.2, 90, 30.0);
        let f = savitzky_golay(&s, 0.5, 2).unwrap();
        for (a, b) in s.samples().iter().zip(f.samples()) {
            assert!((a - b).amax() < 1e-12);
        }
    }

    #[test]
    fn quadratic_is_reproduced() {
        let s = series(|t| t * t - 3.0 * t + 1.0, 1800, 30.0);
        let f = savitzky_golay(&s, 0.5, 2).unwrap();
        for k in 7..1793 {
            assert!((s.samples()[k] - f.samples()[k]).amax() < 1e-9, "sample {k}");
        }
        // Edge fits use the same polynomial degree, so they reproduce it too.
        assert!((s.samples()[0] - f.samples()[0]).amax() < 1e-9);
    }

    #[test]
    fn matches_sliding_polyfit() {
        let rate = 30.0;
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let noise = Normal::new(0.0, 0.3).unwrap();
        let samples: Vec<_> = (0..300)
            .map(|k| {
                let t = k as f64 / rate;
                Vector3::new(
                    5.0 * (2.0 * std::f64::consts::PI * 0.3 * t).sin() + noise.sample(&mut rng),
                    noise.sample(&mut rng),
                    noise.sample(&mut rng),
                )
            })
            .collect();
        let s = SwayTrajectory::from_samples(rate, Segment::Lower, samples).unwrap();
        let f = savitzky_golay(&s, 0.5, 2).unwrap();
        let ap = s.axis(super::super::Axis::AP);
        for k in 0..300usize {
            let lo = k.saturating_sub(7);
            let hi = (k + 7).min(299);
            let x: Vec<f64> = (lo..=hi).map(|i| i as f64 / rate).collect();
            let expect = polyfit_eval(&x, &ap[lo..=hi], 2, k as f64 / rate);
            assert!((f.samples()[k].x - expect).abs() < 1e-9, "sample {k}");
        }
    }

    #[test]
    fn linear_in_the_input() {
        let x = series(|t| (3.0 * t).sin(), 200, 30.0);
        let y = series(|t| t.cos() * t, 200, 30.0);
        let (a, b) = (2.5, -0.7);
        let combo: Vec<_> = x.samples().iter().zip(y.samples()).map(|(p, q)| p * a + q * b).collect();
        let combo = SwayTrajectory::from_samples(30.0, Segment::Upper, combo).unwrap();
        let fx = savitzky_golay(&x, 0.5, 2).unwrap();
        let fy = savitzky_golay(&y, 0.5, 2).unwrap();
        let fc = savitzky_golay(&combo, 0.5, 2).unwrap();
        for k in 0..200 {
            let expect = fx.samples()[k] * a + fy.samples()[k] * b;
            assert!((fc.samples()[k] - expect).amax() < 1e-12);
        }
    }

    #[test]
    fn runs_are_filtered_independently() {
        let mut valid = vec![true; 60];
        valid[30] = false;
        let samples: Vec<_> = (0..60).map(|k| Vector3::repeat(if k < 30 { 1.0 } else { 5.0 })).collect();
        let s = SwayTrajectory::new(30.0, Segment::Upper, samples, valid).unwrap();
        let f = savitzky_golay(&s, 0.5, 2).unwrap();
        assert!((f.samples()[29].x - 1.0).abs() < 1e-12);
        assert!((f.samples()[31].x - 5.0).abs() < 1e-12);
        assert!(!f.valid()[30]);
    }

    #[test]
    fn short_series_and_bad_order() {
        let s = series(|t| t, 10, 30.0);
        assert!(matches!(savitzky_golay(&s, 0.5, 2), Err(Error::SeriesTooShort { found: 10, required: 15 })));
        let s = series(|t| t, 40, 30.0);
        assert!(savitzky_golay(&s, 0.5, 15).is_err());
    }
}
