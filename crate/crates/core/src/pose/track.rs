use serde::{Deserialize, Serialize};

use super::{fit_pose, initialize_first_frame, FitConfig, FitReport, KinematicParams};
use crate::camera::CameraIntrinsics;
use crate::error::{Error, Result};
use crate::features::FeatureObservation;
use crate::target::GeometricTargetModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackConfig {
    pub rate_hz: f64,
    #[serde(default)]
    pub fit: FitConfig,
}

impl TrackConfig {
    pub fn new(rate_hz: f64) -> Result<Self> {
        if !(rate_hz > 0.0) || !rate_hz.is_finite() {
            return Err(Error::InvalidParameter(format!("sample rate must be positive, got {rate_hz}")));
        }
        Ok(Self {
            rate_hz,
            fit: FitConfig::default(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrameStatus {
    Fitted,
    Gap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackedFrame {
    pub status: FrameStatus,
    pub report: Option<FitReport>,
}

impl TrackedFrame {
    pub fn gap() -> Self {
        Self {
            status: FrameStatus::Gap,
            report: None,
        }
    }

    pub fn fitted(report: FitReport) -> Self {
        Self {
            status: FrameStatus::Fitted,
            report: Some(report),
        }
    }

    pub fn theta(&self) -> Option<&KinematicParams> {
        self.report.as_ref().map(|r| &r.theta)
    }
}

/// Per-frame poses on a uniform timebase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseTrack {
    rate_hz: f64,
    frames: Vec<TrackedFrame>,
}

impl PoseTrack {
    pub fn new(rate_hz: f64, frames: Vec<TrackedFrame>) -> Result<Self> {
        TrackConfig::new(rate_hz)?;
        Ok(Self { rate_hz, frames })
    }

    pub fn rate_hz(&self) -> f64 {
        self.rate_hz
    }

    pub fn frames(&self) -> &[TrackedFrame] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn time(&self, frame: usize) -> f64 {
        frame as f64 / self.rate_hz
    }

    pub fn thetas(&self) -> Vec<Option<KinematicParams>> {
        self.frames.iter().map(|f| f.theta().copied()).collect()
    }

    pub fn fitted_count(&self) -> usize {
        self.frames.iter().filter(|f| f.status == FrameStatus::Fitted).count()
    }
}

/// Fits every frame in order, warm-starting each fit from the last fitted pose.
///
/// A frame that cannot be fitted becomes a gap and does not update the warm start.
pub fn track_sequence(
    frames: &[Vec<FeatureObservation>],
    model: &GeometricTargetModel,
    intrinsics: &CameraIntrinsics,
    config: &TrackConfig,
) -> Result<PoseTrack> {
    let mut last: Option<KinematicParams> = None;
    let mut out = Vec::with_capacity(frames.len());
    for (k, obs) in frames.iter().enumerate() {
        let attempt = match last {
            Some(prev) => fit_pose(&prev, model, obs, intrinsics, &config.fit),
            None => initialize_first_frame(model, obs, intrinsics, &config.fit)
                .and_then(|init| fit_pose(&init, model, obs, intrinsics, &config.fit)),
        };
        match attempt {
            Ok(report) => {
                last = Some(report.theta);
                out.push(TrackedFrame::fitted(report));
            }
            Err(e) => {
                log::debug!("frame {k} of '{}' is a gap: {e}", model.name());
                out.push(TrackedFrame::gap());
            }
        }
    }
    if last.is_none() {
        return Err(Error::NoFittableFrame);
    }
    PoseTrack::new(config.rate_hz, out)
}
