use std::collections::HashMap;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::Serialize;

use crate::anatomy::{resample_linear, Axis, Segment, SwayTrajectory};
use crate::error::{Error, Result};
use crate::io;
use crate::metrics::{bland_altman, cohens_d, cousineau_morey, mean, sample_sd, AgreementReport, TplResult};

/// One recording: every segment found in one trajectory CSV.
#[derive(Debug, Clone)]
pub struct Trial {
    /// File stem of the source CSV.
    pub name: String,
    pub trajectories: Vec<SwayTrajectory>,
}

fn is_trajectory_csv(path: &Path) -> Result<bool> {
    if !path.extension().is_some_and(|x| x.eq_ignore_ascii_case("csv")) {
        return Ok(false);
    }
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut header = String::new();
    BufReader::new(file).read_line(&mut header).map_err(|e| Error::io(path, e))?;
    Ok(header.starts_with("t_sec,segment,"))
}

/// Every trajectory CSV in `dir`, sorted by name. Other files are ignored.
pub fn load_trials(dir: &Path) -> Result<Vec<Trial>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if is_trajectory_csv(&path)? {
            paths.push(path);
        }
    }
    if paths.is_empty() {
        return Err(Error::format(dir, "no trajectory CSV files found"));
    }
    paths.sort();
    paths
        .iter()
        .map(|p| {
            Ok(Trial {
                name: p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
                trajectories: io::read_trajectories(p)?,
            })
        })
        .collect()
}

/// Effect size of one outcome between two condition sets.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EffectRow {
    pub segment: Segment,
    pub direction: String,
    pub bin: String,
    pub n_a: usize,
    pub n_b: usize,
    pub mean_a: f64,
    pub mean_b: f64,
    pub sd_a: f64,
    pub sd_b: f64,
    /// `(mean_b - mean_a)` over the pooled SD; empty when undefined.
    pub d: Option<f64>,
    /// Within-participant standard errors over trials present in both sets.
    pub cm_sem_a: Option<f64>,
    pub cm_sem_b: Option<f64>,
}

type Key = (Segment, String, String);
type Values = HashMap<Key, Vec<(String, f64)>>;

fn key(r: &TplResult) -> Key {
    (r.segment, r.direction.to_string(), r.bin.clone())
}

fn collect(trials: &[(String, Vec<TplResult>)]) -> (Vec<Key>, Values) {
    let mut order = Vec::new();
    let mut values: Values = HashMap::new();
    for (name, rows) in trials {
        for r in rows {
            let k = key(r);
            if !values.contains_key(&k) {
                order.push(k.clone());
            }
            values.entry(k).or_default().push((name.clone(), r.value_mm));
        }
    }
    (order, values)
}

/// Cohen's d per segment, direction and bin between condition sets `a` and `b`.
///
/// Trials with the same name in both sets are treated as the same participant
/// for the Cousineau-Morey standard errors.
pub fn compare_conditions(a: &[(String, Vec<TplResult>)], b: &[(String, Vec<TplResult>)]) -> Vec<EffectRow> {
    let (mut order, va) = collect(a);
    let (order_b, vb) = collect(b);
    for k in order_b {
        if !va.contains_key(&k) {
            order.push(k);
        }
    }
    let empty = Vec::new();
    order
        .into_iter()
        .map(|k| {
            let xa = va.get(&k).unwrap_or(&empty);
            let xb = vb.get(&k).unwrap_or(&empty);
            let ya: Vec<f64> = xa.iter().map(|(_, v)| *v).collect();
            let yb: Vec<f64> = xb.iter().map(|(_, v)| *v).collect();
            let d = match cohens_d(&ya, &yb) {
                Ok(d) => Some(d),
                Err(e) => {
                    log::warn!("{} {} {}: no effect size: {e}", k.0, k.1, k.2);
                    None
                }
            };
            let paired: Vec<Vec<f64>> = xa
                .iter()
                .filter_map(|(name, va)| xb.iter().find(|(n, _)| n == name).map(|(_, vb)| vec![*va, *vb]))
                .collect();
            let cm = if paired.len() >= 2 { cousineau_morey(&paired).ok() } else { None };
            EffectRow {
                segment: k.0,
                direction: k.1,
                bin: k.2,
                n_a: ya.len(),
                n_b: yb.len(),
                mean_a: mean(&ya),
                mean_b: mean(&yb),
                sd_a: sample_sd(&ya),
                sd_b: sample_sd(&yb),
                d,
                cm_sem_a: cm.as_ref().map(|c| c.sem[0]),
                cm_sem_b: cm.as_ref().map(|c| c.sem[1]),
            }
        })
        .collect()
}

/// The trajectory of `segment`, or the only one present, or the lower one.
pub fn select_segment(trajectories: &[SwayTrajectory], segment: Option<Segment>) -> Result<&SwayTrajectory> {
    let wanted = match segment {
        Some(s) => s,
        None if trajectories.len() == 1 => return Ok(&trajectories[0]),
        None => Segment::Lower,
    };
    trajectories
        .iter()
        .find(|t| t.segment() == wanted)
        .ok_or_else(|| Error::InvalidParameter(format!("no {wanted} trajectory")))
}

/// Bland-Altman of one axis after resampling both series to `rate_hz`.
///
/// Series are paired sample by sample on their common time span; samples
/// invalid in either series are dropped.
pub fn agreement_between(a: &SwayTrajectory, b: &SwayTrajectory, rate_hz: f64, axis: Axis) -> Result<AgreementReport> {
    let ra = resample_linear(a, rate_hz)?;
    let rb = resample_linear(b, rate_hz)?;
    let offset = (rb.start_sec() - ra.start_sec()) * rate_hz;
    let shift = offset.round();
    if (offset - shift).abs() > 1e-6 {
        return Err(Error::InvalidParameter(format!(
            "start times {} and {} are not on a common {rate_hz} Hz grid",
            ra.start_sec(),
            rb.start_sec()
        )));
    }
    // Sample k of `ra` coincides with sample k - shift of `rb`.
    let shift = shift as i64;
    let first = shift.max(0);
    let last = (ra.len() as i64).min(rb.len() as i64 + shift);
    if last - first < 2 {
        return Err(Error::SeriesTooShort {
            found: (last - first).max(0) as usize,
            required: 2,
        });
    }
    if (last - first) as usize != ra.len() || (last - first) as usize != rb.len() {
        log::warn!(
            "durations differ ({} vs {} samples); trimmed to the {} overlapping samples",
            ra.len(),
            rb.len(),
            last - first
        );
    }
    let i = axis.index();
    let (mut xa, mut xb) = (Vec::new(), Vec::new());
    for k in first..last {
        let (ka, kb) = (k as usize, (k - shift) as usize);
        if ra.valid()[ka] && rb.valid()[kb] {
            xa.push(ra.samples()[ka][i]);
            xb.push(rb.samples()[kb][i]);
        }
    }
    bland_altman(&xa, &xb)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::Direction;
    use nalgebra::Vector3;

    fn tpl(seg: Segment, v: f64) -> TplResult {
        TplResult {
            segment: seg,
            direction: Direction::AP,
            bin: "early".into(),
            value_mm: v,
        }
    }

    #[test]
    fn effect_table_matches_direct_computation() {
        let a: Vec<(String, Vec<TplResult>)> =
            [1.0, 2.0, 4.0].iter().enumerate().map(|(i, v)| (format!("p{i}"), vec![tpl(Segment::Lower, *v)])).collect();
        let b: Vec<(String, Vec<TplResult>)> =
            [3.0, 5.0, 6.0].iter().enumerate().map(|(i, v)| (format!("p{i}"), vec![tpl(Segment::Lower, *v)])).collect();
        let rows = compare_conditions(&a, &b);
        assert_eq!(rows.len(), 1);
        let d = cohens_d(&[1.0, 2.0, 4.0], &[3.0, 5.0, 6.0]).unwrap();
        assert_eq!(rows[0].d, Some(d));
        assert_eq!((rows[0].n_a, rows[0].n_b), (3, 3));
        assert!(rows[0].cm_sem_a.is_some());
    }

    #[test]
    fn unpaired_sets_have_no_within_sem() {
        let a = vec![("x".to_string(), vec![tpl(Segment::Upper, 1.0)]), ("y".to_string(), vec![tpl(Segment::Upper, 2.0)])];
        let b = vec![("z".to_string(), vec![tpl(Segment::Upper, 1.5)]), ("w".to_string(), vec![tpl(Segment::Upper, 2.5)])];
        let rows = compare_conditions(&a, &b);
        assert_eq!(rows[0].cm_sem_a, None);
        assert!(rows[0].d.is_some());
    }

    fn series(start: f64, n: usize, f: impl Fn(f64) -> f64) -> SwayTrajectory {
        let samples = (0..n).map(|k| Vector3::new(f(start + k as f64 / 30.0), 0.0, 0.0)).collect();
        SwayTrajectory::with_start(30.0, start, Segment::Lower, samples, vec![true; n]).unwrap()
    }

    #[test]
    fn identical_series_agree_perfectly() {
        let a = series(0.0, 90, |t| (t * 2.0).sin());
        let r = agreement_between(&a, &a, 30.0, Axis::AP).unwrap();
        assert_eq!(r.bias_mm, 0.0);
        assert_eq!(r.r2, 1.0);
        assert_eq!(r.n, 90);
    }

    #[test]
    fn offset_starts_are_aligned_and_trimmed() {
        let f = |t: f64| t * t;
        let a = series(0.0, 90, f);
        let b = series(1.0, 90, f);
        let r = agreement_between(&a, &b, 30.0, Axis::AP).unwrap();
        assert_eq!(r.n, 60);
        assert!(r.bias_mm.abs() < 1e-12);
    }

    #[test]
    fn segment_selection() {
        let lower = series(0.0, 3, |t| t);
        let upper = SwayTrajectory::from_samples(30.0, Segment::Upper, lower.samples().to_vec()).unwrap();
        let both = vec![upper.clone(), lower.clone()];
        assert_eq!(select_segment(&both, None).unwrap().segment(), Segment::Lower);
        assert_eq!(select_segment(&both, Some(Segment::Upper)).unwrap().segment(), Segment::Upper);
        assert_eq!(select_segment(&both[..1], None).unwrap().segment(), Segment::Upper);
        assert!(select_segment(&both[..1], Some(Segment::Lower)).is_err());
    }
}
