use super::{FeatureObservation, LikelihoodMap};
use crate::camera::PixelPoint;

/// Local maximum in the 3x3 neighborhood; ties go to the earliest pixel in raster order.
fn is_local_max(map: &LikelihoodMap, x: usize, y: usize) -> bool {
    let v = map.get(x, y);
    for dy in -1isize..=1 {
        for dx in -1isize..=1 {
            if dx == 0 && dy == 0 {
                continue;
            }
            let (nx, ny) = (x as isize + dx, y as isize + dy);
            if nx < 0 || ny < 0 || nx >= map.width() as isize || ny >= map.height() as isize {
                continue;
            }
            let n = map.get(nx as usize, ny as usize);
            let earlier = dy < 0 || (dy == 0 && dx < 0);
            if n > v || (earlier && n == v) {
                return false;
            }
        }
    }
    true
}

/// Thresholded local maxima with greedy non-maxima suppression.
///
/// Accepted peaks are at least `nms_radius + 1` apart in Chebyshev distance,
/// returned at their pixel positions in descending score order.
pub fn detect_features(map: &LikelihoodMap, threshold: f64, nms_radius: usize) -> Vec<FeatureObservation> {
    let (w, h) = (map.width(), map.height());
    let mut candidates = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let v = map.get(x, y);
            if v > 0.0 && v >= threshold && is_local_max(map, x, y) {
                candidates.push((x, y, v));
            }
        }
    }
    // Stable sort keeps raster order among equal scores.
    candidates.sort_by(|a, b| b.2.total_cmp(&a.2));

    let mut kept: Vec<(usize, usize, f64)> = Vec::new();
    for c in candidates {
        let clash = kept
            .iter()
            .any(|k| k.0.abs_diff(c.0).max(k.1.abs_diff(c.1)) <= nms_radius);
        if !clash {
            kept.push(c);
        }
    }

    kept.into_iter()
        .map(|(x, y, v)| FeatureObservation {
            position: PixelPoint::new(x as f64, y as f64),
            score: v,
            model_index: None,
        })
        .collect()
}
