//! Checkerboard-junction feature detection.
//!
//! A saddle-prototype kernel bank produces a per-pixel corner likelihood,
//! non-maxima suppression picks candidates, and each candidate is refined to
//! sub-pixel accuracy by gradient orthogonality.

mod detect;
mod likelihood;
mod matching;
mod subpixel;

use serde::{Deserialize, Serialize};

use crate::camera::PixelPoint;
use crate::error::Result;
pub use crate::image::GrayImage;

pub use detect::detect_features;
pub use likelihood::{corner_likelihood, LikelihoodMap, KERNEL_RADIUS, KERNEL_SIZE};
pub use matching::{match_features, MIN_CORRESPONDENCES};
pub use subpixel::{refine_subpixel, refinement_objective};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureObservation {
    pub position: PixelPoint,
    pub score: f64,
    /// Index of the corresponding model feature, once matched.
    pub model_index: Option<usize>,
}

impl FeatureObservation {
    pub fn matched(position: PixelPoint, score: f64, model_index: usize) -> Self {
        Self {
            position,
            score,
            model_index: Some(model_index),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    /// Detection threshold as a fraction of the likelihood map's maximum.
    pub threshold_fraction: f64,
    pub nms_radius: usize,
    pub refine_radius: usize,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            threshold_fraction: 0.5,
            nms_radius: 8,
            refine_radius: 5,
        }
    }
}

/// Full detection chain on one frame: likelihood, suppression, refinement.
///
/// Candidates whose refinement fails (flat or clipped neighborhood) keep their
/// coarse position.
pub fn detect_corners(image: &GrayImage, config: &DetectorConfig) -> Result<Vec<FeatureObservation>> {
    let map = corner_likelihood(image)?;
    let peak = map.max();
    if !(peak > 0.0) {
        return Ok(Vec::new());
    }
    let mut found = detect_features(&map, config.threshold_fraction * peak, config.nms_radius);
    for obs in &mut found {
        if let Ok(p) = refine_subpixel(image, &obs.position, config.refine_radius) {
            obs.position = p;
        }
    }
    Ok(found)
}
