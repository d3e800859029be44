//! Sway summary metrics, repeated-measures normalization, effect sizes and
//! agreement between two measurement systems.

mod agreement;
mod stats;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::anatomy::{Axis, SwayTrajectory};
use crate::error::{Error, Result};

pub use agreement::{bland_altman, AgreementReport, LIMIT_FACTOR};
pub use stats::{cohens_d, cohens_d_from_summary, cousineau_morey, mean, sample_sd, sd_from_sem, CousineauMorey};

/// Axis or anatomical plane a path length is measured in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    AP,
    ML,
    SI,
    APML,
    APSI,
    MLSI,
}

impl Direction {
    pub const ALL: [Direction; 6] = [
        Direction::AP,
        Direction::ML,
        Direction::SI,
        Direction::APML,
        Direction::APSI,
        Direction::MLSI,
    ];

    pub fn axes(self) -> &'static [Axis] {
        match self {
            Direction::AP => &[Axis::AP],
            Direction::ML => &[Axis::ML],
            Direction::SI => &[Axis::SI],
            Direction::APML => &[Axis::AP, Axis::ML],
            Direction::APSI => &[Axis::AP, Axis::SI],
            Direction::MLSI => &[Axis::ML, Axis::SI],
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Direction::AP => "AP",
            Direction::ML => "ML",
            Direction::SI => "SI",
            Direction::APML => "APML",
            Direction::APSI => "APSI",
            Direction::MLSI => "MLSI",
        };
        f.write_str(s)
    }
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Direction::ALL
            .into_iter()
            .find(|d| d.to_string().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidParameter(format!("unknown direction '{s}'")))
    }
}

/// Half-open stance-time interval `[start_sec, end_sec)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeBin {
    pub label: String,
    pub start_sec: f64,
    pub end_sec: f64,
}

/// Tolerance on bin membership, seconds, so that `k / rate` lands in the intended bin.
const TIME_EPS: f64 = 1e-9;

impl TimeBin {
    pub fn new(label: impl Into<String>, start_sec: f64, end_sec: f64) -> Result<Self> {
        if !(start_sec.is_finite() && end_sec.is_finite() && start_sec < end_sec) {
            return Err(Error::InvalidParameter(format!("invalid time bin [{start_sec}, {end_sec})")));
        }
        Ok(Self {
            label: label.into(),
            start_sec,
            end_sec,
        })
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.start_sec - TIME_EPS && t < self.end_sec - TIME_EPS
    }
}

/// Ordered, contiguous stance-time bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StanceBins {
    bins: Vec<TimeBin>,
}

impl Default for StanceBins {
    fn default() -> Self {
        Self::from_edges(&[0.0, 20.0, 40.0, 60.0]).expect("valid default bins")
    }
}

impl StanceBins {
    /// Bins between consecutive edges; three bins are labeled early, mid and late.
    pub fn from_edges(edges: &[f64]) -> Result<Self> {
        if edges.len() < 2 {
            return Err(Error::InvalidParameter("need at least two bin edges".into()));
        }
        let n = edges.len() - 1;
        let bins = edges
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let label = if n == 3 {
                    ["early", "mid", "late"][i].to_string()
                } else {
                    format!("bin{i}")
                };
                TimeBin::new(label, w[0], w[1])
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { bins })
    }

    pub fn new(bins: Vec<TimeBin>) -> Result<Self> {
        if bins.is_empty() {
            return Err(Error::InvalidParameter("no stance bins".into()));
        }
        for w in bins.windows(2) {
            if w[0].end_sec != w[1].start_sec {
                return Err(Error::InvalidParameter(format!(
                    "bins '{}' and '{}' are not contiguous",
                    w[0].label, w[1].label
                )));
            }
        }
        Ok(Self { bins })
    }

    pub fn bins(&self) -> &[TimeBin] {
        &self.bins
    }

    /// The bin spanning all bins.
    pub fn span(&self) -> TimeBin {
        TimeBin {
            label: "all".into(),
            start_sec: self.bins[0].start_sec,
            end_sec: self.bins[self.bins.len() - 1].end_sec,
        }
    }
}

/// Path length together with the step bookkeeping behind it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PathLength {
    pub value_mm: f64,
    /// Steps summed.
    pub steps: usize,
    /// Steps in the bin left out because an endpoint was invalid.
    pub excluded_steps: usize,
}

/// Total path length with step bookkeeping.
///
/// A step between samples `i` and `i + 1` belongs to the bin containing sample
/// `i` and counts only if both samples are valid.
pub fn path_length(traj: &SwayTrajectory, direction: Direction, bin: &TimeBin) -> Result<PathLength> {
    let axes = direction.axes();
    let samples = traj.samples();
    let valid = traj.valid();
    let in_bin = |i: usize| bin.contains(traj.time(i));
    let valid_in_bin = (0..traj.len()).filter(|&i| valid[i] && in_bin(i)).count();
    if valid_in_bin < 2 {
        return Err(Error::SeriesTooShort {
            found: valid_in_bin,
            required: 2,
        });
    }
    let mut total = 0.0;
    let (mut steps, mut excluded) = (0, 0);
    for i in 0..traj.len().saturating_sub(1) {
        if !in_bin(i) {
            continue;
        }
        if !(valid[i] && valid[i + 1]) {
            excluded += 1;
            continue;
        }
        let sq: f64 = axes
            .iter()
            .map(|a| (samples[i + 1][a.index()] - samples[i][a.index()]).powi(2))
            .sum();
        total += sq.sqrt();
        steps += 1;
    }
    Ok(PathLength {
        value_mm: total,
        steps,
        excluded_steps: excluded,
    })
}

/// Sum of consecutive step lengths of the trajectory projected onto `direction`, within `bin`.
pub fn total_path_length(traj: &SwayTrajectory, direction: Direction, bin: &TimeBin) -> Result<f64> {
    path_length(traj, direction, bin).map(|p| p.value_mm)
}

/// One path-length value for a segment, direction and bin.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TplResult {
    pub segment: crate::anatomy::Segment,
    pub direction: Direction,
    pub bin: String,
    pub value_mm: f64,
}

/// Every direction over every bin. Bins without two valid samples are skipped with a warning.
pub fn tpl_table(traj: &SwayTrajectory, bins: &StanceBins) -> Vec<TplResult> {
    let mut out = Vec::new();
    for direction in Direction::ALL {
        for bin in bins.bins() {
            match total_path_length(traj, direction, bin) {
                Ok(v) => out.push(TplResult {
                    segment: traj.segment(),
                    direction,
                    bin: bin.label.clone(),
                    value_mm: v,
                }),
                Err(e) => log::warn!("{} {direction} {}: {e}", traj.segment(), bin.label),
            }
        }
    }
    out
}

/// Trajectory split by stance bin.
#[derive(Debug, Clone)]
pub struct BinnedTrajectory {
    pub parts: Vec<(TimeBin, SwayTrajectory)>,
    pub warnings: Vec<String>,
}

impl BinnedTrajectory {
    pub fn counts(&self) -> Vec<usize> {
        self.parts.iter().map(|(_, t)| t.len()).collect()
    }
}

/// Splits samples by half-open bin membership of their timestamps.
pub fn bin_trajectory(traj: &SwayTrajectory, bins: &StanceBins) -> BinnedTrajectory {
    let mut parts = Vec::with_capacity(bins.bins().len());
    let mut warnings = Vec::new();
    let covered_until = traj.end_sec() + 1.0 / traj.rate_hz();
    for bin in bins.bins() {
        let idx: Vec<usize> = (0..traj.len()).filter(|&i| bin.contains(traj.time(i))).collect();
        let range = match (idx.first(), idx.last()) {
            (Some(&a), Some(&b)) => a..b + 1,
            _ => 0..0,
        };
        if traj.is_empty() || covered_until < bin.end_sec - TIME_EPS || traj.start_sec() > bin.start_sec + TIME_EPS {
            let msg = format!(
                "{} trajectory covers [{:.3}, {:.3}) s, short of bin '{}' [{}, {})",
                traj.segment(),
                traj.start_sec(),
                covered_until,
                bin.label,
                bin.start_sec,
                bin.end_sec
            );
            log::warn!("{msg}");
            warnings.push(msg);
        }
        parts.push((bin.clone(), traj.slice(range)));
    }
    BinnedTrajectory { parts, warnings }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anatomy::{Segment, SwaySample};
    use nalgebra::{Rotation2, Vector2, Vector3};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn traj(samples: Vec<SwaySample>, rate: f64) -> SwayTrajectory {
        SwayTrajectory::from_samples(rate, Segment::Upper, samples).unwrap()
    }

    fn all() -> TimeBin {
        TimeBin::new("all", 0.0, 1e9).unwrap()
    }

    /// Brute-force step sum over every consecutive pair in a plain vector list.
    fn brute_force(points: &[Vec<f64>]) -> f64 {
        let mut s = 0.0;
        for k in 1..points.len() {
            let mut sq = 0.0;
            for d in 0..points[k].len() {
                sq += (points[k][d] - points[k - 1][d]) * (points[k][d] - points[k - 1][d]);
            }
            s += sq.sqrt();
        }
        s
    }

    #[test]
    fn stationary_is_zero() {
        let t = traj(vec![Vector3::new(1.0, 2.0, 3.0); 50], 30.0);
        for d in Direction::ALL {
            assert_eq!(total_path_length(&t, d, &all()).unwrap(), 0.0);
        }
    }

    #[test]
    fn three_four_five() {
        let t = traj(vec![Vector3::zeros(), Vector3::new(3.0, 4.0, 0.0)], 30.0);
        assert_eq!(total_path_length(&t, Direction::APML, &all()).unwrap(), 5.0);
        assert_eq!(total_path_length(&t, Direction::AP, &all()).unwrap(), 3.0);
    }

    #[test]
    fn sinusoid_matches_closed_form() {
        let (a, f, rate) = (10.0, 0.3, 30.0);
        let s = (0..=1800).map(|k| Vector3::new(a * (2.0 * PI * f * k as f64 / rate).sin(), 0.0, 0.0)).collect();
        let t = traj(s, rate);
        let v = total_path_length(&t, Direction::AP, &TimeBin::new("early", 0.0, 20.0).unwrap()).unwrap();
        let expect = 4.0 * a * f * 20.0;
        assert!(((v - expect) / expect).abs() < 0.01, "{v}");
    }

    #[test]
    fn invalid_samples_break_steps() {
        let s = vec![Vector3::zeros(), Vector3::repeat(1.0), Vector3::repeat(2.0), Vector3::repeat(3.0)];
        let t = SwayTrajectory::new(1.0, Segment::Upper, s, vec![true, false, true, true]).unwrap();
        let p = path_length(&t, Direction::AP, &all()).unwrap();
        assert_eq!(p.value_mm, 1.0);
        assert_eq!(p.steps, 1);
        assert_eq!(p.excluded_steps, 2);
    }

    #[test]
    fn too_few_samples() {
        let t = traj(vec![Vector3::zeros(); 1], 30.0);
        assert!(total_path_length(&t, Direction::AP, &all()).is_err());
    }

    #[test]
    fn bins_partition_the_total() {
        let s = (0..1800).map(|k| Vector3::new((k as f64 * 0.37).sin(), (k as f64 * 0.11).cos(), 0.0)).collect();
        let t = traj(s, 30.0);
        let bins = StanceBins::default();
        for d in Direction::ALL {
            let total = total_path_length(&t, d, &bins.span()).unwrap();
            let parts: f64 = bins.bins().iter().map(|b| total_path_length(&t, d, b).unwrap()).sum();
            assert!((total - parts).abs() < 1e-9 * total.max(1.0));
        }
    }

    #[test]
    fn binning_counts_and_boundaries() {
        let t = traj(vec![Vector3::zeros(); 1800], 30.0);
        let b = bin_trajectory(&t, &StanceBins::default());
        assert_eq!(b.counts(), vec![600, 600, 600]);
        assert!(b.warnings.is_empty());
        assert!((b.parts[1].1.start_sec() - 20.0).abs() < 1e-12);

        let short = traj(vec![Vector3::zeros(); 1500], 30.0);
        let b = bin_trajectory(&short, &StanceBins::default());
        assert_eq!(b.counts(), vec![600, 600, 300]);
        assert_eq!(b.warnings.len(), 1);
        assert!(b.warnings[0].contains("late"));
    }

    #[test]
    fn bin_validation() {
        assert!(StanceBins::from_edges(&[0.0, 20.0, 10.0]).is_err());
        assert!(StanceBins::new(vec![TimeBin::new("a", 0.0, 1.0).unwrap(), TimeBin::new("b", 2.0, 3.0).unwrap()]).is_err());
        let b = StanceBins::from_edges(&[0.0, 30.0, 60.0]).unwrap();
        assert_eq!(b.bins()[1].label, "bin1");
        assert_eq!("apml".parse::<Direction>().unwrap(), Direction::APML);
    }

    fn walk(steps: &[(f64, f64, f64)]) -> Vec<SwaySample> {
        let mut p = Vector3::zeros();
        let mut out = vec![p];
        for &(a, b, c) in steps {
            p += Vector3::new(a, b, c);
            out.push(p);
        }
        out
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn equals_brute_force(steps in prop::collection::vec((-5.0..5.0f64, -5.0..5.0f64, -5.0..5.0f64), 1..200)) {
            let samples = walk(&steps);
            let t = traj(samples.clone(), 30.0);
            for d in Direction::ALL {
                let pts: Vec<Vec<f64>> = samples.iter().map(|s| d.axes().iter().map(|a| s[a.index()]).collect()).collect();
                let v = total_path_length(&t, d, &all()).unwrap();
                prop_assert!((v - brute_force(&pts)).abs() <= 1e-12 * v.max(1.0));
            }
        }

        #[test]
        fn planar_rotation_invariance(steps in prop::collection::vec((-5.0..5.0f64, -5.0..5.0f64, -5.0..5.0f64), 1..200),
                                      angle in -PI..PI) {
            let samples = walk(&steps);
            let rot = Rotation2::new(angle);
            let rotated: Vec<SwaySample> = samples
                .iter()
                .map(|s| {
                    let q = rot * Vector2::new(s.x, s.y);
                    Vector3::new(q.x, q.y, s.z)
                })
                .collect();
            let a = total_path_length(&traj(samples, 30.0), Direction::APML, &all()).unwrap();
            let b = total_path_length(&traj(rotated, 30.0), Direction::APML, &all()).unwrap();
            prop_assert!((a - b).abs() < 1e-9);
        }

        #[test]
        fn appending_never_decreases(steps in prop::collection::vec((-5.0..5.0f64, -5.0..5.0f64, -5.0..5.0f64), 2..200),
                                     extra in (-5.0..5.0f64, -5.0..5.0f64, -5.0..5.0f64)) {
            let samples = walk(&steps);
            let mut longer = samples.clone();
            let last = *longer.last().unwrap();
            longer.push(last + Vector3::new(extra.0, extra.1, extra.2));
            for d in Direction::ALL {
                let a = total_path_length(&traj(samples.clone(), 30.0), d, &all()).unwrap();
                let b = total_path_length(&traj(longer.clone(), 30.0), d, &all()).unwrap();
                prop_assert!(b >= a);
            }
        }

        #[test]
        fn plane_versus_axes(steps in prop::collection::vec((-5.0..5.0f64, -5.0..5.0f64, -5.0..5.0f64), 1..100)) {
            let samples = walk(&steps);
            let t = traj(samples.clone(), 30.0);
            let ap = total_path_length(&t, Direction::AP, &all()).unwrap();
            let ml = total_path_length(&t, Direction::ML, &all()).unwrap();
            let apml = total_path_length(&t, Direction::APML, &all()).unwrap();
            prop_assert!(apml <= ap + ml + 1e-9);
            let flat: Vec<SwaySample> = samples.iter().map(|s| Vector3::new(s.x, 7.0, s.z)).collect();
            let t = traj(flat, 30.0);
            prop_assert_eq!(
                total_path_length(&t, Direction::APML, &all()).unwrap(),
                total_path_length(&t, Direction::AP, &all()).unwrap()
            );
        }
    }
}
