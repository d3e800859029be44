//! Synthetic ground truth: smooth sway sequences, their projected features and
//! rendered frames.

mod render;
mod scenario;

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::{project_distorted, CameraIntrinsics};
use crate::error::{Error, Result};
use crate::features::FeatureObservation;
use crate::pose::KinematicParams;
use crate::target::GeometricTargetModel;

pub use render::{add_intensity_noise, render_board, render_frame, render_saddle, render_scene, RenderConfig};
pub use scenario::{Scenario, ScenarioTarget, SimulatedTarget, Simulation};

/// One sinusoidal component: amplitude (mm or rad) and frequency (Hz).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sinusoid {
    pub amplitude: f64,
    pub frequency_hz: f64,
}

impl Sinusoid {
    pub const fn new(amplitude: f64, frequency_hz: f64) -> Self {
        Self {
            amplitude,
            frequency_hz,
        }
    }

    pub const fn zero() -> Self {
        Self::new(0.0, 0.0)
    }
}

/// Sum-of-sinusoids sway, one component per entry of `Θ`.
///
/// Translation is in the camera frame: `x` is medial-lateral, `y`
/// superior-inferior and `z` (depth) anterior-posterior for a target facing the
/// camera.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SwayProfile {
    /// Per Euler angle, radians.
    pub rotation: [Sinusoid; 3],
    /// Per camera axis, millimeters.
    pub translation: [Sinusoid; 3],
    pub duration_sec: f64,
    pub rate_hz: f64,
    pub seed: u64,
}

impl Default for SwayProfile {
    fn default() -> Self {
        Self {
            rotation: [
                Sinusoid::new(0.01, 0.15),
                Sinusoid::new(0.01, 0.25),
                Sinusoid::new(0.01, 0.35),
            ],
            translation: [
                Sinusoid::new(6.0, 0.2),
                Sinusoid::new(3.0, 0.4),
                Sinusoid::new(10.0, 0.3),
            ],
            duration_sec: 60.0,
            rate_hz: 30.0,
            seed: 1,
        }
    }
}

impl SwayProfile {
    /// Constant pose.
    pub fn still(duration_sec: f64, rate_hz: f64) -> Self {
        Self {
            rotation: [Sinusoid::zero(); 3],
            translation: [Sinusoid::zero(); 3],
            duration_sec,
            rate_hz,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let parts = self.rotation.iter().chain(&self.translation);
        for s in parts {
            if !(s.amplitude >= 0.0 && s.amplitude.is_finite() && s.frequency_hz >= 0.0 && s.frequency_hz.is_finite()) {
                return Err(Error::InvalidParameter(format!("invalid sway component {s:?}")));
            }
        }
        if !(self.rate_hz > 0.0 && self.rate_hz.is_finite()) {
            return Err(Error::InvalidParameter(format!("rate must be positive, got {}", self.rate_hz)));
        }
        if !(self.duration_sec > 0.0 && self.duration_sec.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "duration must be positive, got {}",
                self.duration_sec
            )));
        }
        Ok(())
    }

    pub fn frame_count(&self) -> usize {
        (self.duration_sec * self.rate_hz).round() as usize
    }

    /// Seeded phase of each `Θ` component, radians.
    pub fn phases(&self) -> [f64; 6] {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        std::array::from_fn(|_| rng.random_range(0.0..2.0 * PI))
    }

    /// Offset from the base pose at time `t`.
    pub fn offset_at(&self, t: f64) -> [f64; 6] {
        let phases = self.phases();
        self.offset_with(t, &phases)
    }

    fn offset_with(&self, t: f64, phases: &[f64; 6]) -> [f64; 6] {
        let comps = [
            self.rotation[0],
            self.rotation[1],
            self.rotation[2],
            self.translation[0],
            self.translation[1],
            self.translation[2],
        ];
        std::array::from_fn(|i| comps[i].amplitude * (2.0 * PI * comps[i].frequency_hz * t + phases[i]).sin())
    }
}

/// Ground-truth `Θ` at `k / rate_hz` for every frame.
pub fn generate_trajectory(profile: &SwayProfile, base: &KinematicParams) -> Result<Vec<KinematicParams>> {
    profile.validate()?;
    let phases = profile.phases();
    (0..profile.frame_count())
        .map(|k| {
            let off = profile.offset_with(k as f64 / profile.rate_hz, &phases);
            let b = base.as_array();
            KinematicParams::new(std::array::from_fn(|i| b[i] + off[i]))
        })
        .collect()
}

/// Pixel noise and detection dropout applied to rendered observations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseSpec {
    pub pixel_sigma: f64,
    /// Probability that a feature is missing from a frame.
    pub dropout: f64,
    pub seed: u64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self::none()
    }
}

impl NoiseSpec {
    pub fn none() -> Self {
        Self {
            pixel_sigma: 0.0,
            dropout: 0.0,
            seed: 0,
        }
    }

    pub fn new(pixel_sigma: f64, dropout: f64, seed: u64) -> Result<Self> {
        let n = Self {
            pixel_sigma,
            dropout,
            seed,
        };
        n.validate()?;
        Ok(n)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.pixel_sigma >= 0.0 && self.pixel_sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!("pixel noise must be >= 0, got {}", self.pixel_sigma)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidParameter(format!("dropout must be in [0, 1), got {}", self.dropout)));
        }
        Ok(())
    }
}

/// Projected model features for each pose with pixel noise and dropout.
///
/// Every frame draws from its own stream of the seeded generator, so the output
/// does not depend on evaluation order. Observations carry their true model index.
pub fn render_observations(
    thetas: &[KinematicParams],
    model: &GeometricTargetModel,
    intrinsics: &CameraIntrinsics,
    noise: &NoiseSpec,
) -> Result<Vec<Vec<FeatureObservation>>> {
    noise.validate()?;
    let gauss = Normal::new(0.0, noise.pixel_sigma.max(f64::MIN_POSITIVE)).expect("positive sigma");
    thetas
        .par_iter()
        .enumerate()
        .map(|(k, theta)| {
            let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
            rng.set_stream(k as u64);
            let pose = theta.to_transform();
            let mut frame = Vec::with_capacity(model.len());
            for (i, g) in model.points().iter().enumerate() {
                let c = pose.apply(g);
                if !(c.z > crate::camera::MIN_DEPTH) {
                    return Err(Error::FeatureBehindCamera { index: i, z: c.z });
                }
                let mut p = project_distorted(intrinsics, &pose, g)?;
                let drop = rng.random::<f64>() < noise.dropout;
                if noise.pixel_sigma > 0.0 {
                    p.x += gauss.sample(&mut rng);
                    p.y += gauss.sample(&mut rng);
                }
                if !drop {
                    frame.push(FeatureObservation::matched(p, 1.0, i));
                }
            }
            Ok(frame)
        })
        .collect()
}
