//! Pinhole camera with two-coefficient radial distortion.
//!
//! Distortion acts on normalized (pre-`K`) image coordinates:
//! `x_d = x * (1 + k1 r^2 + k2 r^4)`, `r^2 = x^2 + y^2`.

mod calibrate;
mod homography;
mod undistort;

use nalgebra::{Matrix3, Matrix4, Point2, Point3, Rotation3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use calibrate::{calibrate, BoardGeometry, Calibration, CalibrationConfig};
pub use homography::{estimate_homography, estimate_planar_extrinsics, extrinsics_from_homography};
pub use undistort::{undistort_frame, undistort_point};

/// Image coordinate `(u, v)` in pixels.
pub type PixelPoint = Point2<f64>;
/// Euclidean 3D point in millimeters.
pub type WorldPoint = Point3<f64>;

/// Camera-frame depth at or below which a point counts as behind the camera.
pub const MIN_DEPTH: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    /// Skew in pixels.
    #[serde(default)]
    pub s: f64,
    pub x0: f64,
    pub y0: f64,
    #[serde(default)]
    pub k1: f64,
    #[serde(default)]
    pub k2: f64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, s: f64, x0: f64, y0: f64, k1: f64, k2: f64) -> Result<Self> {
        let k = Self {
            fx,
            fy,
            s,
            x0,
            y0,
            k1,
            k2,
        };
        k.validate()?;
        Ok(k)
    }

    /// Distortion-free camera with square pixels and no skew.
    pub fn pinhole(focal: f64, x0: f64, y0: f64) -> Result<Self> {
        Self::new(focal, focal, 0.0, x0, y0, 0.0, 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.fx, self.fy, self.s, self.x0, self.y0, self.k1, self.k2];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("intrinsics must be finite".into()));
        }
        if self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "focal lengths must be positive (fx = {}, fy = {})",
                self.fx, self.fy
            )));
        }
        Ok(())
    }

    pub fn has_distortion(&self) -> bool {
        self.k1 != 0.0 || self.k2 != 0.0
    }

    /// Same camera with the radial terms zeroed.
    pub fn without_distortion(&self) -> Self {
        Self {
            k1: 0.0,
            k2: 0.0,
            ..*self
        }
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(
            self.fx, self.s, self.x0, //
            0.0, self.fy, self.y0, //
            0.0, 0.0, 1.0,
        )
    }

    pub fn inverse_matrix(&self) -> Matrix3<f64> {
        let (fx, fy, s) = (self.fx, self.fy, self.s);
        Matrix3::new(
            1.0 / fx,
            -s / (fx * fy),
            (s * self.y0 - fy * self.x0) / (fx * fy),
            0.0,
            1.0 / fy,
            -self.y0 / fy,
            0.0,
            0.0,
            1.0,
        )
    }

    /// Normalized coordinates to pixels through `K`.
    #[inline]
    pub fn to_pixel(&self, n: Vector2<f64>) -> PixelPoint {
        PixelPoint::new(self.fx * n.x + self.s * n.y + self.x0, self.fy * n.y + self.y0)
    }

    /// Pixels to normalized coordinates through `K^-1`.
    #[inline]
    pub fn to_normalized(&self, p: &PixelPoint) -> Vector2<f64> {
        let y = (p.y - self.y0) / self.fy;
        let x = (p.x - self.x0 - self.s * y) / self.fx;
        Vector2::new(x, y)
    }
}

/// Rigid motion `p -> R p + t` (world to camera when used as an extrinsic).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RigidTransformRepr", into = "RigidTransformRepr")]
pub struct RigidTransform {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

/// Largest tolerated entry of `R R^T - I`.
pub const ORTHONORMALITY_TOLERANCE: f64 = 1e-9;

impl RigidTransform {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        if rotation.iter().chain(translation.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonInvertible("non-finite entries".into()));
        }
        let defect = (rotation * rotation.transpose() - Matrix3::identity()).amax();
        if defect > ORTHONORMALITY_TOLERANCE {
            return Err(Error::NonInvertible(format!(
                "rotation block is not orthonormal (max |R R^T - I| = {defect:.3e})"
            )));
        }
        if rotation.determinant() <= 0.0 {
            return Err(Error::NonInvertible("rotation block has determinant <= 0".into()));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn from_rotation(rotation: Rotation3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation: *rotation.matrix(),
            translation,
        }
    }

    /// Splits a homogeneous 4x4 rigid matrix.
    pub fn from_homogeneous(m: &Matrix4<f64>) -> Result<Self> {
        let bottom = [m[(3, 0)], m[(3, 1)], m[(3, 2)], m[(3, 3)]];
        if bottom != [0.0, 0.0, 0.0, 1.0] {
            return Err(Error::NonInvertible(format!(
                "bottom row must be (0, 0, 0, 1), got {bottom:?}"
            )));
        }
        Self::new(
            m.fixed_view::<3, 3>(0, 0).into_owned(),
            m.fixed_view::<3, 1>(0, 3).into_owned(),
        )
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    #[inline]
    pub fn apply(&self, p: &WorldPoint) -> WorldPoint {
        WorldPoint::from(self.rotation * p.coords + self.translation)
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Self) -> Self {
        Self {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }
}

#[derive(Serialize, Deserialize)]
struct RigidTransformRepr {
    /// Row-major rotation.
    rotation: [[f64; 3]; 3],
    translation_mm: [f64; 3],
}

impl TryFrom<RigidTransformRepr> for RigidTransform {
    type Error = Error;

    fn try_from(r: RigidTransformRepr) -> Result<Self> {
        let m = Matrix3::from_fn(|i, j| r.rotation[i][j]);
        RigidTransform::new(m, Vector3::from(r.translation_mm))
    }
}

impl From<RigidTransform> for RigidTransformRepr {
    fn from(t: RigidTransform) -> Self {
        let mut rotation = [[0.0; 3]; 3];
        for (i, row) in rotation.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = t.rotation[(i, j)];
            }
        }
        Self {
            rotation,
            translation_mm: t.translation.into(),
        }
    }
}

/// Applies the radial model to a normalized image coordinate.
#[inline]
pub fn distort_normalized(intrinsics: &CameraIntrinsics, p: Vector2<f64>) -> Vector2<f64> {
    let r2 = p.norm_squared();
    p * (1.0 + intrinsics.k1 * r2 + intrinsics.k2 * r2 * r2)
}

/// Maps an ideal (pinhole) pixel to where the lens actually images it.
pub fn distort_pixel(intrinsics: &CameraIntrinsics, p: &PixelPoint) -> PixelPoint {
    intrinsics.to_pixel(distort_normalized(intrinsics, intrinsics.to_normalized(p)))
}

fn camera_normalized(pose: &RigidTransform, p: &WorldPoint) -> Result<Vector2<f64>> {
    let c = pose.apply(p);
    if !(c.z > MIN_DEPTH) {
        return Err(Error::BehindCamera { z: c.z });
    }
    Ok(Vector2::new(c.x / c.z, c.y / c.z))
}

/// Pinhole projection `K (R p + t)`, homogenized by depth. Distortion is ignored.
pub fn project(
    intrinsics: &CameraIntrinsics,
    pose: &RigidTransform,
    p: &WorldPoint,
) -> Result<PixelPoint> {
    Ok(intrinsics.to_pixel(camera_normalized(pose, p)?))
}

/// Projection with radial distortion applied before the `K` mapping.
pub fn project_distorted(
    intrinsics: &CameraIntrinsics,
    pose: &RigidTransform,
    p: &WorldPoint,
) -> Result<PixelPoint> {
    let n = camera_normalized(pose, p)?;
    Ok(intrinsics.to_pixel(distort_normalized(intrinsics, n)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn k_ref() -> CameraIntrinsics {
        CameraIntrinsics::new(1000.0, 1000.0, 0.0, 640.0, 512.0, 0.0, 0.0).unwrap()
    }

    #[test]
    fn optical_axis_hits_principal_point() {
        let k = CameraIntrinsics::new(1234.0, 1100.0, 3.0, 611.5, 480.25, 0.1, -0.02).unwrap();
        let p = project(&k, &RigidTransform::identity(), &WorldPoint::new(0.0, 0.0, 1000.0)).unwrap();
        assert_eq!((p.x, p.y), (611.5, 480.25));
    }

    #[test]
    fn hand_evaluated_projection() {
        let p = project(&k_ref(), &RigidTransform::identity(), &WorldPoint::new(100.0, 0.0, 1000.0))
            .unwrap();
        assert!((p.x - 740.0).abs() < 1e-12);
        assert!((p.y - 512.0).abs() < 1e-12);
    }

    #[test]
    fn behind_camera_is_rejected() {
        let r = project(&k_ref(), &RigidTransform::identity(), &WorldPoint::new(0.0, 0.0, -1000.0));
        assert!(matches!(r, Err(Error::BehindCamera { .. })));
        let r = project(&k_ref(), &RigidTransform::identity(), &WorldPoint::new(1.0, 0.0, 0.0));
        assert!(matches!(r, Err(Error::BehindCamera { .. })));
    }

    #[test]
    fn distortion_examples() {
        let mut k = k_ref();
        let p = Vector2::new(0.3, -0.7);
        assert_eq!(distort_normalized(&k, p), p);
        k.k1 = 0.1;
        k.k2 = 0.4;
        assert_eq!(distort_normalized(&k, Vector2::zeros()), Vector2::zeros());
        k.k2 = 0.0;
        let d = distort_normalized(&k, Vector2::new(0.5, 0.0));
        assert!((d.x - 0.5125).abs() < 1e-15);
        assert_eq!(d.y, 0.0);
    }

    #[test]
    fn intrinsics_validation() {
        assert!(CameraIntrinsics::new(0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0).is_err());
        assert!(CameraIntrinsics::new(1.0, f64::NAN, 0.0, 0.0, 0.0, 0.0, 0.0).is_err());
        let k = CameraIntrinsics::new(900.0, 950.0, 2.5, 320.0, 240.0, 0.0, 0.0).unwrap();
        let prod = k.matrix() * k.inverse_matrix();
        assert!((prod - Matrix3::identity()).amax() < 1e-15);
    }

    #[test]
    fn rigid_transform_rejects_non_rotation() {
        let m = Matrix3::new(1.0, 0.1, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(RigidTransform::new(m, Vector3::zeros()).is_err());
        let reflect = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0));
        assert!(RigidTransform::new(reflect, Vector3::zeros()).is_err());
    }

    #[test]
    fn rigid_transform_json() {
        let t = RigidTransform::from_rotation(
            Rotation3::from_euler_angles(0.1, -0.2, 0.3),
            Vector3::new(1.0, 2.0, 3.0),
        );
        let s = serde_json::to_string(&t).unwrap();
        let back: RigidTransform = serde_json::from_str(&s).unwrap();
        assert!((back.to_homogeneous() - t.to_homogeneous()).amax() < 1e-15);
        assert!(serde_json::from_str::<RigidTransform>(
            r#"{"rotation":[[2,0,0],[0,1,0],[0,0,1]],"translation_mm":[0,0,0]}"#
        )
        .is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(256))]

        #[test]
        fn back_projection_through_known_depth(
            rx in -1.0..1.0f64, ry in -1.0..1.0f64, rz in -3.0..3.0f64,
            tx in -200.0..200.0f64, ty in -200.0..200.0f64, tz in 500.0..3000.0f64,
            px in -100.0..100.0f64, py in -100.0..100.0f64, pz in -100.0..100.0f64,
        ) {
            let k = CameraIntrinsics::new(2000.0, 2100.0, 1.5, 1024.0, 900.0, 0.0, 0.0).unwrap();
            let pose = RigidTransform::from_rotation(Rotation3::from_euler_angles(rx, ry, rz), Vector3::new(tx, ty, tz));
            let p = WorldPoint::new(px, py, pz);
            let c = pose.apply(&p);
            prop_assume!(c.z > 10.0);
            let pix = project(&k, &pose, &p).unwrap();
            let n = k.to_normalized(&pix);
            let back = pose.inverse().apply(&WorldPoint::new(n.x * c.z, n.y * c.z, c.z));
            prop_assert!((back - p).norm() < 1e-9);
        }

        #[test]
        fn distortion_is_radially_symmetric(x in -1.0..1.0f64, y in -1.0..1.0f64, a in 0.0..6.3f64,
                                             k1 in -0.3..0.3f64, k2 in -0.1..0.1f64) {
            let mut k = k_ref();
            k.k1 = k1;
            k.k2 = k2;
            let rot = nalgebra::Rotation2::new(a);
            let p = Vector2::new(x, y);
            let lhs = distort_normalized(&k, rot * p);
            let rhs = rot * distort_normalized(&k, p);
            prop_assert!((lhs - rhs).amax() < 1e-12);
        }
    }
}
