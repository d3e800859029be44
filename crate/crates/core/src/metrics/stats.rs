use serde::Serialize;

use crate::error::{Error, Result};

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample standard deviation (`n - 1` denominator).
pub fn sample_sd(x: &[f64]) -> f64 {
    let m = mean(x);
    (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() as f64 - 1.0)).sqrt()
}

/// `SD = SEM * sqrt(n)`.
pub fn sd_from_sem(sem: f64, n: usize) -> f64 {
    sem * (n as f64).sqrt()
}

fn pooled_sd(sd_a: f64, n_a: usize, sd_b: f64, n_b: usize) -> f64 {
    if n_a == n_b {
        ((sd_a * sd_a + sd_b * sd_b) / 2.0).sqrt()
    } else {
        let (na, nb) = (n_a as f64, n_b as f64);
        (((na - 1.0) * sd_a * sd_a + (nb - 1.0) * sd_b * sd_b) / (na + nb - 2.0)).sqrt()
    }
}

/// Standardized mean difference `(mean_b - mean_a) / pooled SD` from summary statistics.
pub fn cohens_d_from_summary(mean_a: f64, sd_a: f64, n_a: usize, mean_b: f64, sd_b: f64, n_b: usize) -> Result<f64> {
    if n_a < 2 || n_b < 2 {
        return Err(Error::SeriesTooShort {
            found: n_a.min(n_b),
            required: 2,
        });
    }
    let sd = pooled_sd(sd_a, n_a, sd_b, n_b);
    if !(sd > 0.0) {
        return Err(Error::ZeroVariance("pooled standard deviation".into()));
    }
    Ok((mean_b - mean_a) / sd)
}

/// Cohen's d of `b` relative to `a` with pooled standard deviation.
pub fn cohens_d(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::SeriesTooShort {
            found: a.len().min(b.len()),
            required: 2,
        });
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    cohens_d_from_summary(mean(a), sample_sd(a), a.len(), mean(b), sample_sd(b), b.len())
}

/// Participant-normalized repeated-measures data.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CousineauMorey {
    /// `x_ij - mean_j(x_ij) + grand mean`, participants by conditions.
    pub normalized: Vec<Vec<f64>>,
    pub condition_means: Vec<f64>,
    /// Within-participant standard errors with the `sqrt(C / (C - 1))` correction.
    pub sem: Vec<f64>,
}

/// Removes between-participant offsets from a participants-by-conditions matrix.
pub fn cousineau_morey(values: &[Vec<f64>]) -> Result<CousineauMorey> {
    let n = values.len();
    let c = values.first().map_or(0, |r| r.len());
    if c < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 conditions, got {c}")));
    }
    if n < 2 {
        return Err(Error::SeriesTooShort { found: n, required: 2 });
    }
    for (i, row) in values.iter().enumerate() {
        if row.len() != c {
            return Err(Error::MissingCell {
                row: i,
                col: row.len().min(c),
            });
        }
        if let Some(j) = row.iter().position(|v| !v.is_finite()) {
            return Err(Error::MissingCell { row: i, col: j });
        }
    }
    let grand = values.iter().flatten().sum::<f64>() / (n * c) as f64;
    let normalized: Vec<Vec<f64>> = values
        .iter()
        .map(|row| {
            let m = mean(row);
            row.iter().map(|v| v - m + grand).collect()
        })
        .collect();
    let correction = (c as f64 / (c as f64 - 1.0)).sqrt();
    let mut condition_means = Vec::with_capacity(c);
    let mut sem = Vec::with_capacity(c);
    for j in 0..c {
        let col: Vec<f64> = normalized.iter().map(|r| r[j]).collect();
        condition_means.push(mean(&col));
        sem.push(sample_sd(&col) * correction / (n as f64).sqrt());
    }
    Ok(CousineauMorey {
        normalized,
        condition_means,
        sem,
    })
}
