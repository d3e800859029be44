//! Planar-target calibration: closed-form intrinsics from per-view
//! homographies, then joint refinement of intrinsics, both radial terms and
//! every view's pose against total reprojection error.

use nalgebra::{DMatrix, DVector, Matrix3, Point2, Rotation3, SVector, Vector3};
use serde::{Deserialize, Serialize};

use super::homography::{estimate_homography, extrinsics_from_homography};
use super::{project_distorted, CameraIntrinsics, PixelPoint, RigidTransform, WorldPoint};
use crate::error::{Error, Result};
use crate::lm::{self, LeastSquaresProblem, LmConfig};

/// Inner-corner layout of a checkerboard.
///
/// Corner `(r, c)` sits at `(c * square, r * square, 0)`: origin at the first
/// inner corner, X along columns, Y along rows, Z out of the board.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoardGeometry {
    pub rows: usize,
    pub cols: usize,
    pub square_size_mm: f64,
}

impl BoardGeometry {
    pub fn validate(&self) -> Result<()> {
        if self.rows < 2 || self.cols < 2 || self.rows * self.cols < 4 {
            return Err(Error::InvalidParameter(format!(
                "board needs at least 2x2 inner corners, got {}x{}",
                self.rows, self.cols
            )));
        }
        if !(self.square_size_mm > 0.0) || !self.square_size_mm.is_finite() {
            return Err(Error::InvalidParameter("square size must be positive".into()));
        }
        Ok(())
    }

    pub fn corner_count(&self) -> usize {
        self.rows * self.cols
    }

    /// Row-major corner positions.
    pub fn corners(&self) -> Vec<WorldPoint> {
        (0..self.rows)
            .flat_map(|r| {
                (0..self.cols).map(move |c| {
                    WorldPoint::new(
                        c as f64 * self.square_size_mm,
                        r as f64 * self.square_size_mm,
                        0.0,
                    )
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CalibrationConfig {
    pub lm: LmConfig,
    pub estimate_distortion: bool,
    /// Largest accepted condition number of the closed-form constraint system.
    pub max_condition_number: f64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            lm: LmConfig {
                max_iterations: 200,
                ..LmConfig::default()
            },
            estimate_distortion: true,
            max_condition_number: 1e9,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Calibration {
    pub intrinsics: CameraIntrinsics,
    /// Board-to-camera pose of each view.
    pub extrinsics: Vec<RigidTransform>,
    /// Root mean square per-corner reprojection distance.
    pub rms_px: f64,
    /// Condition number of the closed-form system.
    pub condition_number: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn v_ij(h: &Matrix3<f64>, i: usize, j: usize) -> SVector<f64, 6> {
    let (hi, hj) = (h.column(i), h.column(j));
    SVector::<f64, 6>::from_row_slice(&[
        hi[0] * hj[0],
        hi[0] * hj[1] + hi[1] * hj[0],
        hi[1] * hj[1],
        hi[2] * hj[0] + hi[0] * hj[2],
        hi[2] * hj[1] + hi[1] * hj[2],
        hi[2] * hj[2],
    ])
}

/// Closed-form `K` from homographies of normalized pixels, plus the system's condition number.
fn closed_form_intrinsics(homographies: &[Matrix3<f64>], max_condition: f64) -> Result<(Matrix3<f64>, f64)> {
    let m = homographies.len();
    let mut v = DMatrix::<f64>::zeros((2 * m).max(6), 6);
    for (k, h) in homographies.iter().enumerate() {
        let v12 = v_ij(h, 0, 1);
        let diff = v_ij(h, 0, 0) - v_ij(h, 1, 1);
        v.row_mut(2 * k).copy_from(&v12.transpose());
        v.row_mut(2 * k + 1).copy_from(&diff.transpose());
    }
    let svd = v.svd(false, true);
    let v_t = svd.v_t.ok_or_else(|| Error::Degenerate("SVD failed".into()))?;
    let mut order: Vec<usize> = (0..6).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let sigma = |k: usize| svd.singular_values[order[k]];
    // One-dimensional null space needs the fifth singular value clear of zero.
    let condition = sigma(0) / sigma(4);
    let ill = |c: f64| Error::IllConditioned {
        condition_number: c,
        views: m,
    };
    if !condition.is_finite() || condition > max_condition {
        return Err(ill(if condition.is_finite() { condition } else { f64::INFINITY }));
    }
    let b = v_t.row(order[5]);
    let (b11, b12, b22, b13, b23, b33) = (b[0], b[1], b[2], b[3], b[4], b[5]);
    let denom = b11 * b22 - b12 * b12;
    if denom.abs() < 1e-300 || b11.abs() < 1e-300 {
        return Err(ill(f64::INFINITY));
    }
    let y0 = (b12 * b13 - b11 * b23) / denom;
    let lambda = b33 - (b13 * b13 + y0 * (b12 * b13 - b11 * b23)) / b11;
    let fx2 = lambda / b11;
    let fy2 = lambda * b11 / denom;
    if !(fx2 > 0.0 && fy2 > 0.0) {
        return Err(ill(condition));
    }
    let fx = fx2.sqrt();
    let fy = fy2.sqrt();
    let s = -b12 * fx * fx * fy / lambda;
    let x0 = s * y0 / fy - b13 * fx * fx / lambda;
    Ok((Matrix3::new(fx, s, x0, 0.0, fy, y0, 0.0, 0.0, 1.0), condition))
}

/// Boards whose first two homography columns agree within this angle, radians,
/// share an orientation.
const ORIENTATION_TOLERANCE: f64 = 1e-2;

/// Number of distinct board orientations among the views.
///
/// The first two columns of `H = K [r1 r2 t]` depend on the board rotation only,
/// so parallel boards at different distances give the same unit direction.
fn distinct_orientations(homographies: &[Matrix3<f64>]) -> usize {
    let mut reps: Vec<SVector<f64, 6>> = Vec::new();
    for h in homographies {
        let mut u = SVector::<f64, 6>::from_iterator(h.column(0).iter().chain(h.column(1).iter()).copied());
        u.normalize_mut();
        let dup = reps.iter().any(|r| {
            let c = r.dot(&u).abs().min(1.0);
            c.acos() < ORIENTATION_TOLERANCE
        });
        if !dup {
            reps.push(u);
        }
    }
    reps.len()
}

struct RefineProblem<'a> {
    corners: &'a [WorldPoint],
    views: &'a [Vec<PixelPoint>],
    with_distortion: bool,
}

const INTRINSIC_PARAMS: usize = 7;

fn unpack_intrinsics(p: &DVector<f64>, with_distortion: bool) -> CameraIntrinsics {
    CameraIntrinsics {
        fx: p[0],
        fy: p[1],
        s: p[2],
        x0: p[3],
        y0: p[4],
        k1: if with_distortion { p[5] } else { 0.0 },
        k2: if with_distortion { p[6] } else { 0.0 },
    }
}

fn unpack_pose(p: &DVector<f64>, view: usize) -> RigidTransform {
    let o = INTRINSIC_PARAMS + 6 * view;
    let rot = Rotation3::from_scaled_axis(Vector3::new(p[o], p[o + 1], p[o + 2]));
    RigidTransform::from_rotation(rot, Vector3::new(p[o + 3], p[o + 4], p[o + 5]))
}

impl LeastSquaresProblem for RefineProblem<'_> {
    fn residuals(&self, p: &DVector<f64>) -> Result<DVector<f64>> {
        let k = unpack_intrinsics(p, self.with_distortion);
        let mut out = Vec::with_capacity(2 * self.corners.len() * self.views.len());
        for (v, observed) in self.views.iter().enumerate() {
            let pose = unpack_pose(p, v);
            for (w, obs) in self.corners.iter().zip(observed) {
                let pred = project_distorted(&k, &pose, w)?;
                out.push(pred.x - obs.x);
                out.push(pred.y - obs.y);
            }
        }
        Ok(DVector::from_vec(out))
    }

    fn difference_step(&self, index: usize, value: f64) -> f64 {
        match index {
            5 | 6 => 1e-7,
            i if i >= INTRINSIC_PARAMS && (i - INTRINSIC_PARAMS) % 6 < 3 => 1e-7,
            _ => 1e-6 * value.abs().max(1.0),
        }
    }

    fn jacobian(&self, p: &DVector<f64>) -> Result<DMatrix<f64>> {
        // Each view's pose only touches that view's rows.
        let n_rows = 2 * self.corners.len() * self.views.len();
        let mut j = DMatrix::<f64>::zeros(n_rows, p.len());
        let mut x = p.clone();
        let view_rows = 2 * self.corners.len();
        for col in 0..p.len() {
            let h = self.difference_step(col, p[col]);
            if col < INTRINSIC_PARAMS {
                if !self.with_distortion && (col == 5 || col == 6) {
                    continue;
                }
                x[col] = p[col] + h;
                let plus = self.residuals(&x)?;
                x[col] = p[col] - h;
                let minus = self.residuals(&x)?;
                x[col] = p[col];
                j.column_mut(col).copy_from(&((plus - minus) / (2.0 * h)));
            } else {
                let view = (col - INTRINSIC_PARAMS) / 6;
                let k = unpack_intrinsics(p, self.with_distortion);
                let eval = |params: &DVector<f64>| -> Result<Vec<f64>> {
                    let pose = unpack_pose(params, view);
                    let mut r = Vec::with_capacity(view_rows);
                    for (w, obs) in self.corners.iter().zip(&self.views[view]) {
                        let pred = project_distorted(&k, &pose, w)?;
                        r.push(pred.x - obs.x);
                        r.push(pred.y - obs.y);
                    }
                    Ok(r)
                };
                x[col] = p[col] + h;
                let plus = eval(&x)?;
                x[col] = p[col] - h;
                let minus = eval(&x)?;
                x[col] = p[col];
                for r in 0..view_rows {
                    j[(view * view_rows + r, col)] = (plus[r] - minus[r]) / (2.0 * h);
                }
            }
        }
        Ok(j)
    }
}

/// Calibrates from per-view corner detections ordered like [`BoardGeometry::corners`].
pub fn calibrate(
    board: &BoardGeometry,
    views: &[Vec<PixelPoint>],
    config: &CalibrationConfig,
) -> Result<Calibration> {
    board.validate()?;
    if views.is_empty() {
        return Err(Error::TooFewViews);
    }
    let corners = board.corners();
    for (i, v) in views.iter().enumerate() {
        if v.len() != corners.len() {
            return Err(Error::InvalidParameter(format!(
                "view {i} has {} corners, board has {}",
                v.len(),
                corners.len()
            )));
        }
    }

    // Condition the closed form by working in normalized pixel units.
    let all: Vec<&PixelPoint> = views.iter().flatten().collect();
    let n = all.len() as f64;
    let cx = all.iter().map(|p| p.x).sum::<f64>() / n;
    let cy = all.iter().map(|p| p.y).sum::<f64>() / n;
    let spread = all
        .iter()
        .map(|p| ((p.x - cx).powi(2) + (p.y - cy).powi(2)).sqrt())
        .sum::<f64>()
        / n;
    let a = if spread > 0.0 { 1.0 / spread } else { 1.0 };
    let norm = Matrix3::new(a, 0.0, -a * cx, 0.0, a, -a * cy, 0.0, 0.0, 1.0);
    let norm_inv = Matrix3::new(1.0 / a, 0.0, cx, 0.0, 1.0 / a, cy, 0.0, 0.0, 1.0);

    let mut homographies = Vec::with_capacity(views.len());
    for view in views {
        let pairs: Vec<_> = corners
            .iter()
            .zip(view)
            .map(|(w, p)| {
                let q = norm * Vector3::new(p.x, p.y, 1.0);
                (*w, Point2::new(q.x / q.z, q.y / q.z))
            })
            .collect();
        homographies.push(estimate_homography(&pairs)?);
    }
    let (k_norm, condition_number) =
        closed_form_intrinsics(&homographies, config.max_condition_number)?;
    if distinct_orientations(&homographies) < 3 {
        return Err(Error::IllConditioned {
            condition_number: f64::INFINITY,
            views: views.len(),
        });
    }
    let k = norm_inv * k_norm;
    let k = k / k[(2, 2)];
    let initial = CameraIntrinsics::new(k[(0, 0)], k[(1, 1)], k[(0, 1)], k[(0, 2)], k[(1, 2)], 0.0, 0.0)
        .map_err(|_| Error::IllConditioned {
            condition_number,
            views: views.len(),
        })?;

    let mut params = vec![initial.fx, initial.fy, initial.s, initial.x0, initial.y0, 0.0, 0.0];
    for h in &homographies {
        let pose = extrinsics_from_homography(&initial, &(norm_inv * h))?;
        let rot = Rotation3::from_matrix_unchecked(*pose.rotation());
        params.extend(rot.scaled_axis().iter());
        params.extend(pose.translation().iter());
    }

    let problem = RefineProblem {
        corners: &corners,
        views,
        with_distortion: config.estimate_distortion,
    };
    let outcome = lm::minimize(&problem, DVector::from_vec(params), &config.lm)?;
    let intrinsics = unpack_intrinsics(&outcome.params, config.estimate_distortion);
    intrinsics.validate()?;
    let extrinsics = (0..views.len())
        .map(|v| unpack_pose(&outcome.params, v))
        .collect();
    Ok(Calibration {
        intrinsics,
        extrinsics,
        rms_px: (outcome.cost / corners.len() as f64 / views.len() as f64).sqrt(),
        condition_number,
        iterations: outcome.iterations,
        converged: outcome.converged(),
    })
}
