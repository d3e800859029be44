use nalgebra::{DMatrix, Matrix3, Point2, Vector3};

use super::{CameraIntrinsics, PixelPoint, RigidTransform, WorldPoint};
use crate::error::{Error, Result};

/// Relative singular-value floor below which the DLT system is rank deficient.
const RANK_TOLERANCE: f64 = 1e-9;

/// Similarity that moves points to zero mean and sqrt(2) mean radius.
fn isotropic_normalization(points: &[Point2<f64>]) -> Result<Matrix3<f64>> {
    let n = points.len() as f64;
    let centroid = points.iter().fold(Vector3::zeros(), |acc, p| {
        acc + Vector3::new(p.x, p.y, 0.0)
    }) / n;
    let mean_dist = points
        .iter()
        .map(|p| ((p.x - centroid.x).powi(2) + (p.y - centroid.y).powi(2)).sqrt())
        .sum::<f64>()
        / n;
    if !(mean_dist > 0.0) || !mean_dist.is_finite() {
        return Err(Error::Degenerate("all points coincide".into()));
    }
    let s = std::f64::consts::SQRT_2 / mean_dist;
    Ok(Matrix3::new(
        s,
        0.0,
        -s * centroid.x,
        0.0,
        s,
        -s * centroid.y,
        0.0,
        0.0,
        1.0,
    ))
}

fn apply(m: &Matrix3<f64>, p: &Point2<f64>) -> Point2<f64> {
    let h = m * Vector3::new(p.x, p.y, 1.0);
    Point2::new(h.x / h.z, h.y / h.z)
}

/// Smallest eigenvalue of the 2x2 scatter matrix relative to the largest.
fn planar_spread(points: &[Point2<f64>]) -> f64 {
    let n = points.len() as f64;
    let (mx, my) = points
        .iter()
        .fold((0.0, 0.0), |(a, b), p| (a + p.x / n, b + p.y / n));
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for p in points {
        let (dx, dy) = (p.x - mx, p.y - my);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    let tr = sxx + syy;
    let det = sxx * syy - sxy * sxy;
    let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
    let (hi, lo) = (tr / 2.0 + disc, tr / 2.0 - disc);
    if hi > 0.0 {
        lo.max(0.0) / hi
    } else {
        0.0
    }
}

/// Normalized DLT homography mapping plane coordinates `(X, Y)` to pixels.
///
/// World points must lie on `Z = 0`; their `Z` is ignored. The result is scaled
/// so `H[2][2] = 1`, or to unit Frobenius norm when that entry vanishes.
pub fn estimate_homography(pairs: &[(WorldPoint, PixelPoint)]) -> Result<Matrix3<f64>> {
    if pairs.len() < 4 {
        return Err(Error::TooFewPoints {
            found: pairs.len(),
            required: 4,
        });
    }
    let world: Vec<Point2<f64>> = pairs.iter().map(|(w, _)| Point2::new(w.x, w.y)).collect();
    let image: Vec<Point2<f64>> = pairs.iter().map(|(_, p)| *p).collect();
    if planar_spread(&world) < 1e-12 {
        return Err(Error::Degenerate("world points are collinear".into()));
    }
    let tw = isotropic_normalization(&world)?;
    let ti = isotropic_normalization(&image)?;

    let rows = (2 * pairs.len()).max(9);
    let mut a = DMatrix::<f64>::zeros(rows, 9);
    for (k, (w, p)) in world.iter().zip(&image).enumerate() {
        let w = apply(&tw, w);
        let p = apply(&ti, p);
        let (x, y, u, v) = (w.x, w.y, p.x, p.y);
        let r = 2 * k;
        a.row_mut(r)
            .copy_from_slice(&[-x, -y, -1.0, 0.0, 0.0, 0.0, u * x, u * y, u]);
        a.row_mut(r + 1)
            .copy_from_slice(&[0.0, 0.0, 0.0, -x, -y, -1.0, v * x, v * y, v]);
    }

    let svd = a.svd(false, true);
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::Degenerate("SVD failed".into()))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let largest = svd.singular_values[order[0]];
    let second_smallest = svd.singular_values[order[7]];
    if second_smallest <= RANK_TOLERANCE * largest {
        return Err(Error::Degenerate(format!(
            "homography system is rank deficient (sigma_8 / sigma_1 = {:.3e})",
            second_smallest / largest
        )));
    }
    let h = v_t.row(order[8]);
    let hn = Matrix3::from_fn(|i, j| h[3 * i + j]);
    let ti_inv = ti
        .try_inverse()
        .ok_or_else(|| Error::Degenerate("normalization not invertible".into()))?;
    let mut hmat = ti_inv * hn * tw;

    let norm = hmat.norm();
    if hmat[(2, 2)].abs() > 1e-12 * norm {
        hmat /= hmat[(2, 2)];
    } else {
        hmat /= norm;
    }
    Ok(hmat)
}

/// Nearest rotation (Frobenius sense) to an arbitrary 3x3 matrix.
pub(crate) fn nearest_rotation(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    let d = (u * v_t).determinant().signum();
    u * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d)) * v_t
}

/// Closed-form board pose from a plane-to-image homography.
///
/// Only the pinhole part of `intrinsics` is used.
pub fn extrinsics_from_homography(
    intrinsics: &CameraIntrinsics,
    h: &Matrix3<f64>,
) -> Result<RigidTransform> {
    let m = intrinsics.inverse_matrix() * h;
    let (c1, c2, c3) = (m.column(0), m.column(1), m.column(2));
    let scale = 0.5 * (c1.norm() + c2.norm());
    if !(scale > 1e-300) || !scale.is_finite() {
        return Err(Error::Degenerate("homography has null rotation columns".into()));
    }
    let mut lambda = 1.0 / scale;
    if c3.z * lambda < 0.0 {
        // The plane must sit in front of the camera.
        lambda = -lambda;
    }
    let r1: Vector3<f64> = c1 * lambda;
    let r2: Vector3<f64> = c2 * lambda;
    let t: Vector3<f64> = c3 * lambda;
    let r3 = r1.cross(&r2);
    let raw = Matrix3::from_columns(&[r1, r2, r3]);
    RigidTransform::new(nearest_rotation(&raw), t)
}

/// Closed-form pose of a planar (`Z = 0`) point set from its image.
pub fn estimate_planar_extrinsics(
    intrinsics: &CameraIntrinsics,
    pairs: &[(WorldPoint, PixelPoint)],
) -> Result<RigidTransform> {
    let h = estimate_homography(pairs)?;
    extrinsics_from_homography(intrinsics, &h)
}
