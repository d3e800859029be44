//! Anatomical sway coordinates.
//!
//! Camera-frame points are expressed in the frame of a board mounted facing
//! forward behind the participant: board X is medial-lateral, board Y is
//! superior-inferior and board Z is anterior-posterior.

mod filter;
mod resample;

use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix4, Vector3};
use serde::{Deserialize, Serialize};

use crate::camera::{RigidTransform, WorldPoint};
use crate::error::{Error, Result};
use crate::pose::PoseTrack;
use crate::target::{virtual_point, BodyOffset};

pub use filter::{savitzky_golay, savitzky_golay_coefficients, window_length, DEFAULT_ORDER, DEFAULT_WINDOW_SEC};
pub use resample::{interpolate_gaps, resample_linear, GapReport};

/// Human-readable axis convention written alongside trajectories.
pub const AXIS_CONVENTION: &str = "board X -> ML, board Y -> SI, board Z -> AP";

/// `(AP, ML, SI)` in millimeters.
pub type SwaySample = Vector3<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Axis {
    AP,
    ML,
    SI,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::AP, Axis::ML, Axis::SI];

    /// Component index in a [`SwaySample`].
    pub fn index(self) -> usize {
        match self {
            Axis::AP => 0,
            Axis::ML => 1,
            Axis::SI => 2,
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::AP => "AP",
            Axis::ML => "ML",
            Axis::SI => "SI",
        })
    }
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Axis::ALL
            .into_iter()
            .find(|a| a.to_string().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidParameter(format!("unknown axis '{s}'")))
    }
}

/// Which target a trajectory came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Segment {
    Upper,
    Lower,
}

impl fmt::Display for Segment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Segment::Upper => "upper",
            Segment::Lower => "lower",
        })
    }
}

impl FromStr for Segment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "upper" | "shoulder" => Ok(Segment::Upper),
            "lower" | "lumbar" => Ok(Segment::Lower),
            other => Err(Error::InvalidParameter(format!("unknown segment '{other}'"))),
        }
    }
}

/// Extrinsics `ℰ` of the forward-facing anatomical board (board to camera).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AnatomicalFrame {
    extrinsic: RigidTransform,
}

impl AnatomicalFrame {
    pub fn new(extrinsic: RigidTransform) -> Self {
        Self { extrinsic }
    }

    pub fn identity() -> Self {
        Self::new(RigidTransform::identity())
    }

    pub fn from_matrix(m: &Matrix4<f64>) -> Result<Self> {
        RigidTransform::from_homogeneous(m)
            .map(Self::new)
            .map_err(|e| Error::NonInvertible(format!("anatomical frame: {e}")))
    }

    pub fn extrinsic(&self) -> &RigidTransform {
        &self.extrinsic
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::format(path, e))
    }
}

/// `ℰ⁻¹ z`, relabeled as `(AP, ML, SI)`.
pub fn to_anatomical(frame: &AnatomicalFrame, z: &WorldPoint) -> SwaySample {
    let q = frame.extrinsic.inverse().apply(z);
    Vector3::new(q.z, q.x, q.y)
}

/// Uniformly sampled anatomical trajectory with a validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct SwayTrajectory {
    rate_hz: f64,
    start_sec: f64,
    segment: Segment,
    samples: Vec<SwaySample>,
    valid: Vec<bool>,
}

impl SwayTrajectory {
    pub fn new(rate_hz: f64, segment: Segment, samples: Vec<SwaySample>, valid: Vec<bool>) -> Result<Self> {
        Self::with_start(rate_hz, 0.0, segment, samples, valid)
    }

    /// Trajectory whose first sample is at `start_sec` of stance time.
    pub fn with_start(
        rate_hz: f64,
        start_sec: f64,
        segment: Segment,
        samples: Vec<SwaySample>,
        valid: Vec<bool>,
    ) -> Result<Self> {
        if !(rate_hz > 0.0) || !rate_hz.is_finite() {
            return Err(Error::InvalidParameter(format!("sample rate must be positive, got {rate_hz}")));
        }
        if !start_sec.is_finite() {
            return Err(Error::InvalidParameter("start time must be finite".into()));
        }
        if samples.len() != valid.len() {
            return Err(Error::LengthMismatch {
                a: samples.len(),
                b: valid.len(),
            });
        }
        if samples
            .iter()
            .zip(&valid)
            .any(|(s, v)| *v && !s.iter().all(|x| x.is_finite()))
        {
            return Err(Error::NonFinite);
        }
        Ok(Self {
            rate_hz,
            start_sec,
            segment,
            samples,
            valid,
        })
    }

    /// All samples valid.
    pub fn from_samples(rate_hz: f64, segment: Segment, samples: Vec<SwaySample>) -> Result<Self> {
        let valid = vec![true; samples.len()];
        Self::new(rate_hz, segment, samples, valid)
    }

    pub fn rate_hz(&self) -> f64 {
        self.rate_hz
    }

    pub fn start_sec(&self) -> f64 {
        self.start_sec
    }

    pub fn segment(&self) -> Segment {
        self.segment
    }

    pub fn samples(&self) -> &[SwaySample] {
        &self.samples
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn time(&self, k: usize) -> f64 {
        self.start_sec + k as f64 / self.rate_hz
    }

    pub fn end_sec(&self) -> f64 {
        self.time(self.len().saturating_sub(1))
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    /// One component over time; invalid samples read as NaN.
    pub fn axis(&self, axis: Axis) -> Vec<f64> {
        self.samples
            .iter()
            .zip(&self.valid)
            .map(|(s, v)| if *v { s[axis.index()] } else { f64::NAN })
            .collect()
    }

    /// Samples with index in `range`, keeping the absolute timebase.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Self {
        let start = range.start.min(self.len());
        let end = range.end.min(self.len()).max(start);
        Self {
            rate_hz: self.rate_hz,
            start_sec: self.time(start),
            segment: self.segment,
            samples: self.samples[start..end].to_vec(),
            valid: self.valid[start..end].to_vec(),
        }
    }

    /// Half-open index ranges of consecutive valid samples.
    pub fn valid_runs(&self) -> Vec<std::ops::Range<usize>> {
        let mut runs = Vec::new();
        let mut start = None;
        for (i, v) in self.valid.iter().enumerate() {
            match (v, start) {
                (true, None) => start = Some(i),
                (false, Some(s)) => {
                    runs.push(s..i);
                    start = None;
                }
                _ => {}
            }
        }
        if let Some(s) = start {
            runs.push(s..self.len());
        }
        runs
    }

    pub(crate) fn with_data(&self, samples: Vec<SwaySample>, valid: Vec<bool>) -> Self {
        Self {
            samples,
            valid,
            ..self.clone()
        }
    }
}

/// Anatomical trajectory of a body-fixed point carried by a tracked target.
///
/// Gap frames become invalid samples.
pub fn trajectory_from_track(
    track: &PoseTrack,
    offset: &BodyOffset,
    frame: &AnatomicalFrame,
    segment: Segment,
) -> Result<SwayTrajectory> {
    let mut samples = Vec::with_capacity(track.len());
    let mut valid = Vec::with_capacity(track.len());
    for theta in track.thetas() {
        match theta {
            Some(theta) => {
                samples.push(to_anatomical(frame, &virtual_point(&theta, offset)));
                valid.push(true);
            }
            None => {
                samples.push(Vector3::repeat(f64::NAN));
                valid.push(false);
            }
        }
    }
    SwayTrajectory::new(track.rate_hz(), segment, samples, valid)
}
