//! End-to-end workflows built from the numeric modules: calibration from board
//! frames, tracking into anatomical trajectories, path-length analysis and
//! agreement between two recordings.

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::camera::{undistort_point, CameraIntrinsics};
use crate::error::{Error, Result};
use crate::features::{detect_corners, DetectorConfig, FeatureObservation};
use crate::image::GrayImage;

mod analysis;
mod calibration;
mod track;

pub use analysis::{agreement_between, compare_conditions, load_trials, select_segment, EffectRow, Trial};
pub use calibration::{calibrate_frames, order_board_corners, FrameCalibration};
pub use track::{
    run_tracking, track_detections, write_tracking_outputs, FilterSettings, MatchSettings, PipelineConfig,
    TargetInput, TargetResult, TrackOptions, TrackSummary,
};

/// Binary PGM frames in `dir`, sorted by file name.
pub fn list_frames(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut frames = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|x| x.eq_ignore_ascii_case("pgm")) {
            frames.push(path);
        }
    }
    if frames.is_empty() {
        return Err(Error::format(dir, "no .pgm frames found"));
    }
    frames.sort();
    Ok(frames)
}

/// Detections of every frame in `dir`, computed in parallel.
///
/// With a distorting camera the refined positions are mapped to the
/// undistorted image so the pinhole fit applies directly.
pub fn detect_frames(
    dir: &Path,
    detector: &DetectorConfig,
    intrinsics: Option<&CameraIntrinsics>,
) -> Result<Vec<Vec<FeatureObservation>>> {
    let frames = list_frames(dir)?;
    frames
        .par_iter()
        .map(|path| {
            let image = GrayImage::read_pgm(path)?;
            let found = detect_corners(&image, detector)?;
            log::debug!("{}: {} detections", path.display(), found.len());
            match intrinsics {
                Some(k) => undistort_observations(k, found),
                None => Ok(found),
            }
        })
        .collect()
}

/// Maps observed positions through the inverse distortion; a no-op for pinhole cameras.
pub fn undistort_observations(
    intrinsics: &CameraIntrinsics,
    mut obs: Vec<FeatureObservation>,
) -> Result<Vec<FeatureObservation>> {
    if intrinsics.has_distortion() {
        for o in &mut obs {
            o.position = undistort_point(intrinsics, &o.position)?;
        }
    }
    Ok(obs)
}

/// `path` relative to `base` unless already absolute.
pub(crate) fn resolve_path(base: Option<&Path>, path: &Path) -> PathBuf {
    match base {
        Some(b) if path.is_relative() => b.join(path),
        _ => path.to_path_buf(),
    }
}
