use std::path::{Path, PathBuf};

use nalgebra::Vector2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{detect_frames, resolve_path, undistort_observations};
use crate::anatomy::{
    interpolate_gaps, savitzky_golay, trajectory_from_track, AnatomicalFrame, GapReport, Segment, SwayTrajectory,
    DEFAULT_ORDER, DEFAULT_WINDOW_SEC,
};
use crate::camera::{project, CameraIntrinsics, PixelPoint};
use crate::error::{Error, Result};
use crate::features::{match_features, DetectorConfig, FeatureObservation};
use crate::io;
use crate::pose::{fit_pose, initialize_first_frame, FitConfig, FitReport, KinematicParams, PoseTrack, TrackedFrame};
use crate::target::GeometricTargetModel;

/// One worn target to track.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetInput {
    /// Built-in model name or path to a target JSON file.
    pub model: String,
    pub segment: Segment,
    /// Features CSV for this target. Without it detections come from the frames directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<PathBuf>,
    /// Approximate pose at the first frame, needed to label unlabeled detections.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init_pose: Option<KinematicParams>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterSettings {
    pub window_sec: f64,
    pub order: usize,
}

impl Default for FilterSettings {
    fn default() -> Self {
        Self {
            window_sec: DEFAULT_WINDOW_SEC,
            order: DEFAULT_ORDER,
        }
    }
}

/// Labeling of unlabeled detections against predicted feature positions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatchSettings {
    /// Largest distance between a detection and its predicted feature, pixels.
    pub gate_px: f64,
    /// Largest image shift searched when reacquiring after the first frame or a gap, pixels.
    pub search_px: f64,
}

impl Default for MatchSettings {
    fn default() -> Self {
        Self {
            gate_px: 15.0,
            search_px: 100.0,
        }
    }
}

/// Per-target tracking settings for [`track_detections`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackOptions {
    pub rate_hz: f64,
    pub matching: MatchSettings,
    pub fit: FitConfig,
    /// Fits with a larger RMS residual become gaps.
    pub max_rms_px: Option<f64>,
}

impl Default for TrackOptions {
    fn default() -> Self {
        Self {
            rate_hz: default_rate(),
            matching: MatchSettings::default(),
            fit: FitConfig::default(),
            max_rms_px: None,
        }
    }
}

fn default_rate() -> f64 {
    30.0
}

fn default_max_gap() -> f64 {
    0.5
}

/// Everything `track` needs. Relative paths resolve against the config file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub intrinsics: PathBuf,
    /// Extrinsics of the forward-facing anatomical board.
    pub anatomical_frame: PathBuf,
    pub targets: Vec<TargetInput>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frames_dir: Option<PathBuf>,
    /// Pads feature-CSV sequences whose last frames have no rows.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame_count: Option<usize>,
    #[serde(default = "default_rate")]
    pub rate_hz: f64,
    /// Stance time of the first frame.
    #[serde(default)]
    pub stance_start_sec: f64,
    #[serde(default)]
    pub filter: FilterSettings,
    #[serde(default = "default_max_gap")]
    pub max_gap_sec: f64,
    #[serde(default)]
    pub detector: DetectorConfig,
    #[serde(default)]
    pub matching: MatchSettings,
    #[serde(default)]
    pub fit: FitConfig,
    /// Fits with a larger RMS residual become gaps.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_rms_px: Option<f64>,
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

impl PipelineConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut config: PipelineConfig = io::read_json(path)?;
        config.base_dir = path.parent().map(Path::to_path_buf);
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rate_hz > 0.0 && self.rate_hz.is_finite()) {
            return Err(Error::InvalidParameter(format!("rate must be positive, got {}", self.rate_hz)));
        }
        if self.targets.is_empty() {
            return Err(Error::InvalidParameter("no targets to track".into()));
        }
        for (i, t) in self.targets.iter().enumerate() {
            if self.targets[..i].iter().any(|o| o.segment == t.segment) {
                return Err(Error::InvalidParameter(format!("segment '{}' is tracked twice", t.segment)));
            }
            if t.features.is_none() && self.frames_dir.is_none() {
                return Err(Error::InvalidParameter(format!(
                    "target '{}' has no features file and no frames directory is set",
                    t.model
                )));
            }
        }
        if !(self.max_gap_sec >= 0.0) {
            return Err(Error::InvalidParameter("max_gap_sec must be non-negative".into()));
        }
        if !(self.matching.gate_px > 0.0 && self.matching.search_px >= 0.0) {
            return Err(Error::InvalidParameter("matching gate must be positive".into()));
        }
        if !(self.stance_start_sec.is_finite()) {
            return Err(Error::InvalidParameter("stance start must be finite".into()));
        }
        Ok(())
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        resolve_path(self.base_dir.as_deref(), path)
    }

    pub fn track_options(&self) -> TrackOptions {
        TrackOptions {
            rate_hz: self.rate_hz,
            matching: self.matching,
            fit: self.fit,
            max_rms_px: self.max_rms_px,
        }
    }
}

/// Tracked and post-processed output for one target.
#[derive(Debug, Clone)]
pub struct TargetResult {
    pub model: GeometricTargetModel,
    pub segment: Segment,
    pub track: PoseTrack,
    /// Virtual-point trajectory straight from the fitted poses.
    pub raw: SwayTrajectory,
    /// Gap-bridged and smoothed trajectory.
    pub trajectory: SwayTrajectory,
    pub gaps: GapReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrackSummary {
    pub segment: Segment,
    pub model: String,
    pub frames: usize,
    pub fitted: usize,
    pub gaps: usize,
    pub unconverged: usize,
    pub degenerate: usize,
    pub mean_rms_px: f64,
    pub interpolated_samples: usize,
    pub unfilled_samples: usize,
}

impl TargetResult {
    pub fn summary(&self) -> TrackSummary {
        let reports: Vec<&FitReport> = self.track.frames().iter().filter_map(|f| f.report.as_ref()).collect();
        let mean_rms_px = if reports.is_empty() {
            f64::NAN
        } else {
            reports.iter().map(|r| r.rms_residual_px).sum::<f64>() / reports.len() as f64
        };
        TrackSummary {
            segment: self.segment,
            model: self.model.name().to_string(),
            frames: self.track.len(),
            fitted: reports.len(),
            gaps: self.track.len() - reports.len(),
            unconverged: reports.iter().filter(|r| !r.converged).count(),
            degenerate: reports.iter().filter(|r| r.degenerate).count(),
            mean_rms_px,
            interpolated_samples: self.gaps.filled.iter().map(|r| r.len()).sum(),
            unfilled_samples: self.gaps.unfilled_samples(),
        }
    }
}

impl std::fmt::Display for TrackSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} ({}): {} frames, {} fitted, {} gaps, mean RMS {:.3} px",
            self.segment, self.model, self.frames, self.fitted, self.gaps, self.mean_rms_px
        )
    }
}

/// Image shift aligning the most predictions with a detection within `tol`.
fn vote_shift(detections: &[FeatureObservation], predicted: &[PixelPoint], search: f64, tol: f64) -> Vector2<f64> {
    let mut best = (0usize, f64::INFINITY, Vector2::zeros());
    for d in detections {
        for p in predicted {
            let shift = d.position - p;
            let norm = shift.norm();
            if norm > search {
                continue;
            }
            let support = predicted
                .iter()
                .filter(|q| detections.iter().any(|e| (e.position - (*q + shift)).norm() < tol))
                .count();
            if support > best.0 || (support == best.0 && norm < best.1) {
                best = (support, norm, shift);
            }
        }
    }
    best.2
}

fn label(
    detections: &[FeatureObservation],
    model: &GeometricTargetModel,
    intrinsics: &CameraIntrinsics,
    guide: &KinematicParams,
    settings: &MatchSettings,
    reacquire: bool,
) -> Result<Vec<FeatureObservation>> {
    let pose = guide.to_transform();
    let mut predicted = model
        .points()
        .iter()
        .map(|g| project(intrinsics, &pose, g))
        .collect::<Result<Vec<_>>>()?;
    if reacquire {
        let shift = vote_shift(detections, &predicted, settings.search_px, settings.gate_px / 3.0);
        for p in &mut predicted {
            *p += shift;
        }
    }
    match_features(detections, &predicted, settings.gate_px)
}

/// Sequential warm-started tracking of one target through per-frame detections.
///
/// Frames whose detections all carry model indices are fitted as given. Other
/// frames are labeled against the features predicted from the last fitted pose
/// (or `init_pose` before the first fit); after the first frame or a gap the
/// prediction is first re-aligned by a shift vote. Positions must be undistorted.
pub fn track_detections(
    frames: &[Vec<FeatureObservation>],
    model: &GeometricTargetModel,
    intrinsics: &CameraIntrinsics,
    init_pose: Option<&KinematicParams>,
    options: &TrackOptions,
) -> Result<PoseTrack> {
    let (settings, fit) = (&options.matching, &options.fit);
    let mut last: Option<KinematicParams> = None;
    let mut reacquire = true;
    let mut out = Vec::with_capacity(frames.len());
    for (k, detections) in frames.iter().enumerate() {
        let labeled = !detections.is_empty() && detections.iter().all(|o| o.model_index.is_some());
        let obs = if labeled {
            Ok(detections.clone())
        } else {
            let Some(guide) = last.as_ref().or(init_pose) else {
                return Err(Error::InvalidParameter(format!(
                    "target '{}' has unlabeled detections but no init_pose",
                    model.name()
                )));
            };
            label(detections, model, intrinsics, guide, settings, reacquire)
        };
        let attempt = obs.and_then(|obs| match last {
            Some(prev) => fit_pose(&prev, model, &obs, intrinsics, fit),
            None => initialize_first_frame(model, &obs, intrinsics, fit)
                .and_then(|init| fit_pose(&init, model, &obs, intrinsics, fit)),
        });
        match attempt {
            Ok(report) if options.max_rms_px.is_some_and(|m| report.rms_residual_px > m) => {
                log::warn!(
                    "frame {k} of '{}': RMS {:.3} px above limit, marked as gap",
                    model.name(),
                    report.rms_residual_px
                );
                reacquire = true;
                out.push(TrackedFrame::gap());
            }
            Ok(report) => {
                if !report.converged {
                    log::warn!("frame {k} of '{}': fit did not converge", model.name());
                }
                last = Some(report.theta);
                reacquire = false;
                out.push(TrackedFrame::fitted(report));
            }
            Err(e) => {
                log::debug!("frame {k} of '{}' is a gap: {e}", model.name());
                reacquire = true;
                out.push(TrackedFrame::gap());
            }
        }
    }
    if last.is_none() {
        return Err(Error::NoFittableFrame);
    }
    PoseTrack::new(options.rate_hz, out)
}

/// Runs the full tracking workflow; targets are processed in parallel.
pub fn run_tracking(config: &PipelineConfig) -> Result<Vec<TargetResult>> {
    config.validate()?;
    let intrinsics = io::read_intrinsics(config.resolve(&config.intrinsics))?;
    let frame = AnatomicalFrame::load(config.resolve(&config.anatomical_frame))?;
    let models = config
        .targets
        .iter()
        .map(|t| GeometricTargetModel::resolve(&t.model, config.base_dir.as_deref()))
        .collect::<Result<Vec<_>>>()?;

    let image_detections = match &config.frames_dir {
        Some(dir) if config.targets.iter().any(|t| t.features.is_none()) => {
            Some(detect_frames(&config.resolve(dir), &config.detector, Some(&intrinsics))?)
        }
        _ => None,
    };

    config
        .targets
        .par_iter()
        .zip(models)
        .map(|(target, model)| {
            let mut frames = match &target.features {
                Some(path) => undistort_all(&intrinsics, io::read_features(config.resolve(path))?)?,
                None => image_detections.clone().expect("frames were detected"),
            };
            if let Some(n) = config.frame_count {
                if frames.len() > n {
                    return Err(Error::InvalidParameter(format!(
                        "'{}' has {} frames, frame_count is {n}",
                        target.model,
                        frames.len()
                    )));
                }
                frames.resize(n, Vec::new());
            }
            let track = track_detections(
                &frames,
                &model,
                &intrinsics,
                target.init_pose.as_ref(),
                &config.track_options(),
            )?;
            postprocess(config, &frame, model, target.segment, track)
        })
        .collect()
}

fn undistort_all(
    intrinsics: &CameraIntrinsics,
    frames: Vec<Vec<FeatureObservation>>,
) -> Result<Vec<Vec<FeatureObservation>>> {
    frames.into_iter().map(|f| undistort_observations(intrinsics, f)).collect()
}

fn postprocess(
    config: &PipelineConfig,
    frame: &AnatomicalFrame,
    model: GeometricTargetModel,
    segment: Segment,
    track: PoseTrack,
) -> Result<TargetResult> {
    let from_track = trajectory_from_track(&track, &model.virtual_offset(), frame, segment)?;
    let raw = SwayTrajectory::with_start(
        config.rate_hz,
        config.stance_start_sec,
        segment,
        from_track.samples().to_vec(),
        from_track.valid().to_vec(),
    )?;
    let (filled, gaps) = interpolate_gaps(&raw, config.max_gap_sec)?;
    let trajectory = savitzky_golay(&filled, config.filter.window_sec, config.filter.order)?;
    Ok(TargetResult {
        model,
        segment,
        track,
        raw,
        trajectory,
        gaps,
    })
}

/// Writes `pose_<segment>.csv` per target, `trajectory.csv` and `summary.json`.
pub fn write_tracking_outputs(out_dir: &Path, results: &[TargetResult]) -> Result<()> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    for r in results {
        io::write_pose_track(out_dir.join(format!("pose_{}.csv", r.segment)), &r.track)?;
    }
    let trajectories: Vec<&SwayTrajectory> = results.iter().map(|r| &r.trajectory).collect();
    io::write_trajectories(out_dir.join("trajectory.csv"), &trajectories)?;
    let summaries: Vec<TrackSummary> = results.iter().map(TargetResult::summary).collect();
    io::write_json(out_dir.join("summary.json"), &summaries)
}
