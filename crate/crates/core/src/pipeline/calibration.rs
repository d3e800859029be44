use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;

use super::list_frames;
use crate::camera::{calibrate, estimate_homography, BoardGeometry, Calibration, CalibrationConfig, PixelPoint, WorldPoint};
use crate::error::{Error, Result};
use crate::features::{detect_corners, match_features, DetectorConfig, FeatureObservation};
use crate::image::GrayImage;

/// Fraction of the smallest predicted corner spacing used as the matching gate.
const GATE_FRACTION: f64 = 0.4;

#[derive(Debug, Clone)]
pub struct FrameCalibration {
    pub calibration: Calibration,
    pub used: Vec<PathBuf>,
    /// Frames whose board could not be found, with the reason.
    pub skipped: Vec<(PathBuf, String)>,
}

fn map(h: &Matrix3<f64>, p: &WorldPoint) -> PixelPoint {
    let q = h * Vector3::new(p.x, p.y, 1.0);
    PixelPoint::new(q.x / q.z, q.y / q.z)
}

fn assign(detections: &[FeatureObservation], h: &Matrix3<f64>, corners: &[WorldPoint], board: &BoardGeometry) -> Option<Vec<PixelPoint>> {
    let predicted: Vec<PixelPoint> = corners.iter().map(|c| map(h, c)).collect();
    let mut spacing = f64::INFINITY;
    for r in 0..board.rows {
        for c in 0..board.cols {
            let i = r * board.cols + c;
            if c + 1 < board.cols {
                spacing = spacing.min((predicted[i + 1] - predicted[i]).norm());
            }
            if r + 1 < board.rows {
                spacing = spacing.min((predicted[i + board.cols] - predicted[i]).norm());
            }
        }
    }
    if !(spacing > 0.0 && spacing.is_finite()) {
        return None;
    }
    let matched = match_features(detections, &predicted, GATE_FRACTION * spacing).ok()?;
    (matched.len() == corners.len()).then(|| matched.iter().map(|o| o.position).collect())
}

/// Orders detected inner corners like [`BoardGeometry::corners`].
///
/// The four extreme detections seed a homography for each cyclic assignment to
/// the board's outer corners; the first assignment that explains every corner,
/// after one re-estimation from all matches, wins.
pub fn order_board_corners(detections: &[PixelPoint], board: &BoardGeometry) -> Result<Vec<PixelPoint>> {
    board.validate()?;
    let n = board.corner_count();
    if detections.len() < n {
        return Err(Error::TooFewPoints {
            found: detections.len(),
            required: n,
        });
    }
    let obs: Vec<FeatureObservation> = detections
        .iter()
        .map(|p| FeatureObservation {
            position: *p,
            score: 1.0,
            model_index: None,
        })
        .collect();
    let extreme = |key: &dyn Fn(&PixelPoint) -> f64| {
        *detections
            .iter()
            .max_by(|a, b| key(a).total_cmp(&key(b)))
            .expect("non-empty detections")
    };
    let image = [
        extreme(&|p| -(p.x + p.y)),
        extreme(&|p| p.x - p.y),
        extreme(&|p| p.x + p.y),
        extreme(&|p| p.y - p.x),
    ];
    let corners = board.corners();
    let (r, c) = (board.rows, board.cols);
    let outer = [0, c - 1, r * c - 1, (r - 1) * c];
    for rot in 0..4 {
        let pairs: Vec<(WorldPoint, PixelPoint)> = (0..4).map(|i| (corners[outer[i]], image[(i + rot) % 4])).collect();
        let Ok(h) = estimate_homography(&pairs) else {
            continue;
        };
        let Some(first) = assign(&obs, &h, &corners, board) else {
            continue;
        };
        let all: Vec<(WorldPoint, PixelPoint)> = corners.iter().copied().zip(first.iter().copied()).collect();
        let refined = estimate_homography(&all)
            .ok()
            .and_then(|h2| assign(&obs, &h2, &corners, board))
            .unwrap_or(first);
        return Ok(refined);
    }
    Err(Error::Degenerate(format!("could not identify a {r}x{c} corner grid")))
}

fn board_view(path: &Path, board: &BoardGeometry, detector: &DetectorConfig) -> Result<Vec<PixelPoint>> {
    let image = GrayImage::read_pgm(path)?;
    let found: Vec<PixelPoint> = detect_corners(&image, detector)?.iter().map(|o| o.position).collect();
    order_board_corners(&found, board)
}

/// Calibrates from every PGM frame in `dir`; frames without a complete board are skipped.
pub fn calibrate_frames(
    dir: &Path,
    board: &BoardGeometry,
    detector: &DetectorConfig,
    config: &CalibrationConfig,
) -> Result<FrameCalibration> {
    board.validate()?;
    let frames = list_frames(dir)?;
    let views: Vec<Result<Vec<PixelPoint>>> = frames.par_iter().map(|p| board_view(p, board, detector)).collect();
    let mut used = Vec::new();
    let mut skipped = Vec::new();
    let mut points = Vec::new();
    for (path, view) in frames.into_iter().zip(views) {
        match view {
            Ok(v) => {
                points.push(v);
                used.push(path);
            }
            Err(e @ (Error::Io { .. } | Error::Format { .. })) => return Err(e),
            Err(e) => {
                log::warn!("{}: board not found: {e}", path.display());
                skipped.push((path, e.to_string()));
            }
        }
    }
    let calibration = calibrate(board, &points, config)?;
    Ok(FrameCalibration {
        calibration,
        used,
        skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::{project, CameraIntrinsics, RigidTransform};
    use nalgebra::Rotation3;

    fn board() -> BoardGeometry {
        BoardGeometry {
            rows: 6,
            cols: 8,
            square_size_mm: 25.0,
        }
    }

    fn view(rx: f64, ry: f64, rz: f64) -> (Vec<PixelPoint>, Vec<PixelPoint>) {
        let k = CameraIntrinsics::pinhole(1500.0, 640.0, 512.0).unwrap();
        let pose = RigidTransform::from_rotation(Rotation3::from_euler_angles(rx, ry, rz), Vector3::new(-90.0, -60.0, 700.0));
        let truth: Vec<PixelPoint> = board().corners().iter().map(|c| project(&k, &pose, c).unwrap()).collect();
        let mut shuffled = truth.clone();
        shuffled.reverse();
        shuffled.swap(3, 17);
        (truth, shuffled)
    }

    #[test]
    fn orders_shuffled_corners() {
        for (rx, ry, rz) in [(0.0, 0.0, 0.0), (0.3, -0.2, 0.1), (-0.25, 0.3, -0.2)] {
            let (truth, shuffled) = view(rx, ry, rz);
            let ordered = order_board_corners(&shuffled, &board()).unwrap();
            assert_eq!(ordered, truth);
        }
    }

    #[test]
    fn ignores_extra_detections() {
        let (truth, mut shuffled) = view(0.1, 0.1, 0.0);
        // Spurious responses at two cell centers.
        for (a, b) in [(0, 9), (20, 29)] {
            shuffled.push(PixelPoint::from((truth[a].coords + truth[b].coords) * 0.5));
        }
        assert_eq!(order_board_corners(&shuffled, &board()).unwrap(), truth);
    }

    #[test]
    fn too_few_detections() {
        let (_, mut shuffled) = view(0.0, 0.0, 0.0);
        shuffled.truncate(10);
        assert!(matches!(
            order_board_corners(&shuffled, &board()),
            Err(Error::TooFewPoints { found: 10, required: 48 })
        ));
    }
}
