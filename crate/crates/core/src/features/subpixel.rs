//! Gradient-orthogonality corner refinement.
//!
//! At a junction `p`, every neighborhood pixel `n` with gradient `g` satisfies
//! `g . (n - p) = 0`: pixels on an edge have gradients normal to the edge line
//! through `p`, flat pixels have `g = 0`. The refined corner minimizes
//! `sum (g_n . (n - q))^2` over `q`, whose normal equations are
//! `(sum g g^T) q = sum (g g^T) n`.

use nalgebra::{Matrix2, Vector2};

use super::GrayImage;
use crate::camera::PixelPoint;
use crate::error::{Error, Result};

const MAX_CONDITION: f64 = 1e8;

/// Pixel window `[cx - r, cx + r]^2` whose Sobel stencils stay inside the image.
fn window(img: &GrayImage, coarse: &PixelPoint, radius: usize) -> Result<(usize, usize)> {
    let out = || Error::NeighborhoodOutOfBounds {
        u: coarse.x,
        v: coarse.y,
        radius,
    };
    if !coarse.x.is_finite() || !coarse.y.is_finite() {
        return Err(out());
    }
    let (cx, cy) = (coarse.x.round(), coarse.y.round());
    let r = radius as f64;
    if cx - r < 1.0
        || cy - r < 1.0
        || cx + r > (img.width() as f64 - 2.0)
        || cy + r > (img.height() as f64 - 2.0)
    {
        return Err(out());
    }
    Ok((cx as usize, cy as usize))
}

fn neighborhood<'a>(
    img: &'a GrayImage,
    cx: usize,
    cy: usize,
    radius: usize,
) -> impl Iterator<Item = (Vector2<f64>, Vector2<f64>)> + 'a {
    (cy - radius..=cy + radius).flat_map(move |y| {
        (cx - radius..=cx + radius).map(move |x| {
            let (gx, gy) = img.sobel(x, y);
            (Vector2::new(x as f64, y as f64), Vector2::new(gx, gy))
        })
    })
}

/// Sum of squared gradient projections onto `n - q` over the window around `coarse`.
pub fn refinement_objective(img: &GrayImage, coarse: &PixelPoint, radius: usize, q: &PixelPoint) -> Result<f64> {
    let (cx, cy) = window(img, coarse, radius)?;
    Ok(neighborhood(img, cx, cy, radius)
        .map(|(n, g)| g.dot(&(n - q.coords)).powi(2))
        .sum())
}

/// Closed-form minimizer of [`refinement_objective`].
///
/// Falls back to `coarse` if the solution leaves the window radius.
pub fn refine_subpixel(img: &GrayImage, coarse: &PixelPoint, radius: usize) -> Result<PixelPoint> {
    let (cx, cy) = window(img, coarse, radius)?;
    let mut a = Matrix2::zeros();
    let mut b = Vector2::zeros();
    for (n, g) in neighborhood(img, cx, cy, radius) {
        let ggt = g * g.transpose();
        a += ggt;
        b += ggt * n;
    }
    let eig = a.symmetric_eigenvalues();
    let (lo, hi) = (eig.min(), eig.max());
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !(hi > 0.0) || condition >= MAX_CONDITION {
        return Err(Error::NoGradient {
            condition_number: condition,
        });
    }
    let p = a
        .try_inverse()
        .map(|inv| inv * b)
        .ok_or(Error::NoGradient {
            condition_number: condition,
        })?;
    let refined = PixelPoint::from(p);
    if (refined - coarse).norm() > radius as f64 {
        return Ok(*coarse);
    }
    Ok(refined)
}
