use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};

use super::{motion_matrix_raw, KinematicParams};
use crate::camera::{estimate_planar_extrinsics, CameraIntrinsics, PixelPoint, WorldPoint, MIN_DEPTH};
use crate::error::{Error, Result};
use crate::features::{FeatureObservation, MIN_CORRESPONDENCES};
use crate::lm::{self, LeastSquaresProblem, LmConfig, Termination};
use crate::target::GeometricTargetModel;

/// Features of a model counted as coplanar within this distance, millimeters.
const PLANARITY_TOLERANCE_MM: f64 = 1e-6;
/// Ratio of smallest to largest Jacobian singular value below which the fit is flagged.
const DEGENERACY_RATIO: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    pub step_tolerance: f64,
    /// Central-difference step for the angles, radians.
    pub angle_step: f64,
    /// Central-difference step for the translation, millimeters.
    pub translation_step: f64,
    /// Depth of the frontal starting pose used for non-planar models.
    pub nominal_depth_mm: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            gradient_tolerance: 1e-10,
            step_tolerance: 1e-12,
            angle_step: 1e-6,
            translation_step: 1e-4,
            nominal_depth_mm: 1000.0,
        }
    }
}

impl FitConfig {
    fn lm(&self) -> LmConfig {
        LmConfig {
            max_iterations: self.max_iterations,
            gradient_tolerance: self.gradient_tolerance,
            step_tolerance: self.step_tolerance,
            ..LmConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub theta: KinematicParams,
    pub rms_residual_px: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Jacobian rank below 6 at the solution.
    pub degenerate: bool,
    /// Diagonal of `(J^T J)^-1`; infinite where the normal matrix is singular.
    pub covariance_diagonal: [f64; 6],
    /// Objective after each accepted step.
    pub cost_history: Vec<f64>,
}

struct PoseProblem<'a> {
    model: &'a GeometricTargetModel,
    obs: Vec<(usize, PixelPoint)>,
    intrinsics: &'a CameraIntrinsics,
    config: &'a FitConfig,
}

impl PoseProblem<'_> {
    fn residuals_for(&self, t: &[f64; 6]) -> Result<DVector<f64>> {
        let m = motion_matrix_raw(t);
        let k = self.intrinsics;
        let mut r = DVector::zeros(2 * self.obs.len());
        for (i, (index, p)) in self.obs.iter().enumerate() {
            let g = self.model.points()[*index];
            let c = m * g.to_homogeneous();
            if !(c.z > MIN_DEPTH) {
                return Err(Error::FeatureBehindCamera { index: *index, z: c.z });
            }
            let (x, y) = (c.x / c.z, c.y / c.z);
            r[2 * i] = k.fx * x + k.s * y + k.x0 - p.x;
            r[2 * i + 1] = k.fy * y + k.y0 - p.y;
        }
        Ok(r)
    }
}

fn as_array(v: &DVector<f64>) -> [f64; 6] {
    [v[0], v[1], v[2], v[3], v[4], v[5]]
}

impl LeastSquaresProblem for PoseProblem<'_> {
    fn residuals(&self, params: &DVector<f64>) -> Result<DVector<f64>> {
        self.residuals_for(&as_array(params))
    }

    fn difference_step(&self, index: usize, _value: f64) -> f64 {
        if index < 3 {
            self.config.angle_step
        } else {
            self.config.translation_step
        }
    }
}

fn matched_pairs(model: &GeometricTargetModel, obs: &[FeatureObservation]) -> Result<Vec<(usize, PixelPoint)>> {
    let mut pairs = Vec::with_capacity(obs.len());
    for o in obs {
        match o.model_index {
            Some(i) if i < model.len() => pairs.push((i, o.position)),
            Some(i) => {
                return Err(Error::InvalidParameter(format!(
                    "model index {i} out of range for '{}' with {} features",
                    model.name(),
                    model.len()
                )))
            }
            None => {}
        }
    }
    if pairs.len() < MIN_CORRESPONDENCES {
        return Err(Error::InsufficientCorrespondence {
            found: pairs.len(),
            required: MIN_CORRESPONDENCES,
        });
    }
    Ok(pairs)
}

/// `Π(M_Θ G_i) - p_i` for each matched observation, interleaved `(u, v)`.
pub fn reprojection_residuals(
    theta: &KinematicParams,
    model: &GeometricTargetModel,
    obs: &[FeatureObservation],
    intrinsics: &CameraIntrinsics,
) -> Result<DVector<f64>> {
    let mut pairs = Vec::with_capacity(obs.len());
    for o in obs {
        let i = o
            .model_index
            .ok_or_else(|| Error::InvalidParameter("observation without a model index".into()))?;
        if i >= model.len() {
            return Err(Error::InvalidParameter(format!("model index {i} out of range")));
        }
        pairs.push((i, o.position));
    }
    let config = FitConfig::default();
    let problem = PoseProblem {
        model,
        obs: pairs,
        intrinsics,
        config: &config,
    };
    problem.residuals_for(theta.as_array())
}

fn wrap_angle(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(2.0 * PI) - PI;
    if w <= -PI {
        w + 2.0 * PI
    } else {
        w
    }
}

/// Equivalent Euler triple with `θ1, θ3 ∈ (-π, π]` and `|θ2| ≤ π/2`.
fn canonical(mut t: [f64; 6]) -> [f64; 6] {
    t[1] = wrap_angle(t[1]);
    if t[1].abs() > FRAC_PI_2 {
        t[0] += PI;
        t[1] = PI.copysign(t[1]) - t[1];
        t[2] += PI;
    }
    t[0] = wrap_angle(t[0]);
    t[2] = wrap_angle(t[2]);
    t
}

/// Levenberg-Marquardt refinement of `Θ` against matched observations.
pub fn fit_pose(
    init: &KinematicParams,
    model: &GeometricTargetModel,
    obs: &[FeatureObservation],
    intrinsics: &CameraIntrinsics,
    config: &FitConfig,
) -> Result<FitReport> {
    let problem = PoseProblem {
        model,
        obs: matched_pairs(model, obs)?,
        intrinsics,
        config,
    };
    let outcome = lm::minimize(&problem, DVector::from_column_slice(init.as_array()), &config.lm())?;
    let theta = KinematicParams::new(canonical(as_array(&outcome.params)))?;

    let j: DMatrix<f64> = problem.jacobian(&outcome.params)?;
    let sv = j.clone().singular_values();
    let (smin, smax) = (sv.min(), sv.max());
    let degenerate = !(smax > 0.0) || smin / smax < DEGENERACY_RATIO;
    let jtj = j.transpose() * &j;
    let covariance_diagonal = match jtj.try_inverse() {
        Some(inv) if !degenerate => std::array::from_fn(|i| inv[(i, i)]),
        _ => [f64::INFINITY; 6],
    };
    if degenerate {
        log::warn!("degenerate geometry fitting '{}': Jacobian rank below 6", model.name());
    }
    let m = outcome.residuals.len() as f64;
    Ok(FitReport {
        theta,
        rms_residual_px: (outcome.cost / m).sqrt(),
        iterations: outcome.iterations,
        converged: outcome.termination != Termination::MaxIterations,
        degenerate,
        covariance_diagonal,
        cost_history: outcome.cost_history,
    })
}

/// Starting `Θ` for the first frame of a sequence.
///
/// Coplanar models use the closed-form homography pose of their plane. Other
/// models are fitted from a frontal pose at the nominal depth.
pub fn initialize_first_frame(
    model: &GeometricTargetModel,
    obs: &[FeatureObservation],
    intrinsics: &CameraIntrinsics,
    config: &FitConfig,
) -> Result<KinematicParams> {
    let pairs = matched_pairs(model, obs)?;
    let Some(plane) = model.plane_frame(PLANARITY_TOLERANCE_MM) else {
        let prior = frontal_prior(model, config.nominal_depth_mm)?;
        return Ok(fit_pose(&prior, model, obs, intrinsics, config)?.theta);
    };
    let world: Vec<(WorldPoint, PixelPoint)> = pairs
        .iter()
        .map(|(i, p)| {
            let q = plane.apply(&model.points()[*i]);
            (WorldPoint::new(q.x, q.y, 0.0), *p)
        })
        .collect();
    let camera_from_plane = estimate_planar_extrinsics(intrinsics, &world)?;
    let camera_from_target = camera_from_plane.compose(&plane);
    if camera_from_target.translation().z <= 0.0 {
        return Err(Error::BehindCamera {
            z: camera_from_target.translation().z,
        });
    }
    KinematicParams::from_transform(&camera_from_target)
}

/// Frontal starting pose at `depth_mm` centered on the model.
pub fn frontal_prior(model: &GeometricTargetModel, depth_mm: f64) -> Result<KinematicParams> {
    let c: Vector3<f64> = model.centroid().coords;
    KinematicParams::new([0.0, 0.0, 0.0, -c.x, -c.y, depth_mm - c.z])
}
