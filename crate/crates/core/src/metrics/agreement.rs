use serde::{Deserialize, Serialize};

use super::stats::{mean, sample_sd};
use crate::error::{Error, Result};

/// Multiplier of the difference SD giving the 95 % limits of agreement.
pub const LIMIT_FACTOR: f64 = 1.96;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    /// Mean of `b - a`.
    pub bias_mm: f64,
    /// `bias ± 1.96 SD`.
    pub loa: [f64; 2],
    /// Sample SD of `b - a`.
    pub sd_mm: f64,
    /// Least-squares fit `b = slope * a + intercept`.
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub n: usize,
}

/// Bland-Altman agreement of paired measurements, plus the regression of `b` on `a`.
pub fn bland_altman(a: &[f64], b: &[f64]) -> Result<AgreementReport> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch { a: a.len(), b: b.len() });
    }
    let n = a.len();
    if n < 3 {
        return Err(Error::SeriesTooShort { found: n, required: 3 });
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| y - x).collect();
    let bias = mean(&d);
    let sd = sample_sd(&d);

    let (ma, mb) = (mean(a), mean(b));
    let sxx: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let syy: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    let sxy: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    if !(sxx > 0.0) {
        return Err(Error::ZeroVariance("first series".into()));
    }
    let slope = sxy / sxx;
    let intercept = mb - slope * ma;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };

    Ok(AgreementReport {
        bias_mm: bias,
        loa: [bias - LIMIT_FACTOR * sd, bias + LIMIT_FACTOR * sd],
        sd_mm: sd,
        slope,
        intercept,
        r2,
        n,
    })
}
