//! Six-DOF kinematic fitting of a rigid target model to image features.
//!
//! The motion matrix is `M = [Rz(θ1) Ry(θ2) Rx(θ3) | (θ4, θ5, θ6)]`: three
//! Z-Y-X Euler angles in radians followed by a camera-frame translation in
//! millimeters.

mod fit;
mod track;

use std::f64::consts::FRAC_PI_2;

use nalgebra::{Matrix3, Matrix4, Vector3};
use serde::{Deserialize, Serialize};

use crate::camera::{RigidTransform, WorldPoint};
use crate::error::{Error, Result};

pub use fit::{fit_pose, frontal_prior, initialize_first_frame, reprojection_residuals, FitConfig, FitReport};
pub use track::{track_sequence, FrameStatus, PoseTrack, TrackConfig, TrackedFrame};

/// Keeps `|θ2|` this far from `π/2`.
pub const GIMBAL_MARGIN: f64 = 1e-6;

/// `Θ = (θ1, θ2, θ3, θ4, θ5, θ6)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 6]", into = "[f64; 6]")]
pub struct KinematicParams([f64; 6]);

impl KinematicParams {
    pub fn new(values: [f64; 6]) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("kinematic parameters must be finite".into()));
        }
        if values[1].abs() >= FRAC_PI_2 - GIMBAL_MARGIN {
            return Err(Error::GimbalLock {
                r31: -values[1].sin(),
            });
        }
        Ok(Self(values))
    }

    pub fn zero() -> Self {
        Self([0.0; 6])
    }

    pub fn from_parts(angles: [f64; 3], translation: [f64; 3]) -> Result<Self> {
        Self::new([
            angles[0],
            angles[1],
            angles[2],
            translation[0],
            translation[1],
            translation[2],
        ])
    }

    /// Euler decomposition of a rigid transform.
    ///
    /// `θ2 = -asin(R31)`, `θ1 = atan2(R21, R11)`, `θ3 = atan2(R32, R33)`.
    pub fn from_transform(t: &RigidTransform) -> Result<Self> {
        let r = t.rotation();
        let r31 = r[(2, 0)];
        if r31.abs() > 1.0 - 1e-9 {
            return Err(Error::GimbalLock { r31 });
        }
        let tr = t.translation();
        Self::new([
            r[(1, 0)].atan2(r[(0, 0)]),
            -r31.clamp(-1.0, 1.0).asin(),
            r[(2, 1)].atan2(r[(2, 2)]),
            tr.x,
            tr.y,
            tr.z,
        ])
    }

    pub fn as_array(&self) -> &[f64; 6] {
        &self.0
    }

    pub fn angles(&self) -> Vector3<f64> {
        Vector3::new(self.0[0], self.0[1], self.0[2])
    }

    pub fn translation(&self) -> Vector3<f64> {
        Vector3::new(self.0[3], self.0[4], self.0[5])
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        motion_matrix(self).fixed_view::<3, 3>(0, 0).into_owned()
    }

    pub fn to_transform(&self) -> RigidTransform {
        RigidTransform::from_rotation(
            nalgebra::Rotation3::from_matrix_unchecked(self.rotation_matrix()),
            self.translation(),
        )
    }

    /// Applies `M_Θ` to a target-frame point.
    pub fn transform_point(&self, p: &WorldPoint) -> WorldPoint {
        let m = motion_matrix(self);
        let h = m * p.to_homogeneous();
        WorldPoint::new(h.x, h.y, h.z)
    }
}

impl TryFrom<[f64; 6]> for KinematicParams {
    type Error = Error;

    fn try_from(v: [f64; 6]) -> Result<Self> {
        Self::new(v)
    }
}

impl From<KinematicParams> for [f64; 6] {
    fn from(k: KinematicParams) -> Self {
        k.0
    }
}

/// Homogeneous motion matrix `M_Θ`, entry by entry.
pub fn motion_matrix(theta: &KinematicParams) -> Matrix4<f64> {
    motion_matrix_raw(&theta.0)
}

pub(crate) fn motion_matrix_raw(t: &[f64; 6]) -> Matrix4<f64> {
    let (s1, c1) = t[0].sin_cos();
    let (s2, c2) = t[1].sin_cos();
    let (s3, c3) = t[2].sin_cos();
    Matrix4::new(
        c1 * c2,
        c1 * s2 * s3 - s1 * c3,
        c1 * s2 * c3 + s1 * s3,
        t[3],
        s1 * c2,
        s1 * s2 * s3 + c1 * c3,
        s1 * s2 * c3 - c1 * s3,
        t[4],
        -s2,
        c2 * s3,
        c2 * c3,
        t[5],
        0.0,
        0.0,
        0.0,
        1.0,
    )
}
