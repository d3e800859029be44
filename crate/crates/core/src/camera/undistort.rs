use nalgebra::Vector2;

use super::{distort_normalized, distort_pixel, CameraIntrinsics, PixelPoint};
use crate::error::{Error, Result};
use crate::image::GrayImage;

const MAX_ITERATIONS: usize = 20;
const TOLERANCE: f64 = 1e-10;

/// Inverts the radial model for one pixel with damped fixed-point iteration.
pub fn undistort_point(intrinsics: &CameraIntrinsics, p: &PixelPoint) -> Result<PixelPoint> {
    if !intrinsics.has_distortion() {
        return Ok(*p);
    }
    let target = intrinsics.to_normalized(p);
    let residual = |x: Vector2<f64>| distort_normalized(intrinsics, x) - target;

    let mut x = target;
    let mut err = residual(x);
    let mut damping = 1.0;
    for _ in 0..MAX_ITERATIONS {
        if err.norm() < TOLERANCE {
            return Ok(intrinsics.to_pixel(x));
        }
        let r2 = x.norm_squared();
        let factor = 1.0 + intrinsics.k1 * r2 + intrinsics.k2 * r2 * r2;
        // x <- x - w * (d(x) - target) / f(x); w = 1 is the classic x = target / f(x).
        let candidate = x - err * (damping / factor);
        let candidate_err = residual(candidate);
        if candidate_err.norm() < err.norm() {
            x = candidate;
            err = candidate_err;
            damping = (damping * 2.0).min(1.0);
        } else {
            damping *= 0.5;
        }
    }
    if err.norm() < TOLERANCE {
        Ok(intrinsics.to_pixel(x))
    } else {
        Err(Error::DistortionInversion {
            iterations: MAX_ITERATIONS,
        })
    }
}

/// Resamples a raw frame onto the ideal pinhole grid.
///
/// Each output pixel reads the input at its distorted location; samples that
/// land outside the input are set to zero.
pub fn undistort_frame(intrinsics: &CameraIntrinsics, image: &GrayImage) -> Result<GrayImage> {
    if image.width() == 0 || image.height() == 0 {
        return Err(Error::EmptyImage);
    }
    if !intrinsics.has_distortion() {
        return Ok(image.clone());
    }
    let (w, h) = (image.width(), image.height());
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let src = distort_pixel(intrinsics, &PixelPoint::new(x as f64, y as f64));
            out.push(image.sample_bilinear(src.x, src.y).unwrap_or(0.0));
        }
    }
    GrayImage::from_vec(w, h, out)
}
