use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::{generate_trajectory, render_observations, render_scene, NoiseSpec, RenderConfig, SwayProfile};
use crate::anatomy::{to_anatomical, AnatomicalFrame, Segment, SwayTrajectory};
use crate::camera::{CameraIntrinsics, RigidTransform};
use crate::error::{Error, Result};
use crate::features::FeatureObservation;
use crate::image::GrayImage;
use crate::pose::KinematicParams;
use crate::target::{virtual_point, GeometricTargetModel};

/// One worn target in a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioTarget {
    /// Built-in model name or path to a target JSON file.
    pub model_ref: String,
    pub segment: Segment,
    /// Pose about which the target sways.
    pub base_pose: KinematicParams,
    /// Overrides the scenario-wide sway profile.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<SwayProfile>,
}

/// Complete synthetic recording description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Scenario {
    pub profile: SwayProfile,
    pub noise: NoiseSpec,
    pub camera: CameraIntrinsics,
    pub image_width: usize,
    pub image_height: usize,
    pub targets: Vec<ScenarioTarget>,
    /// Extrinsics of the forward-facing anatomical board.
    pub anatomical_frame: AnatomicalFrame,
    pub render: RenderConfig,
    /// Directory for resolving relative model paths; set when loading from a file.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            profile: SwayProfile::default(),
            noise: NoiseSpec::none(),
            camera: CameraIntrinsics::pinhole(4000.0, 1024.0, 1024.0).expect("valid camera"),
            image_width: 2048,
            image_height: 2048,
            targets: vec![
                ScenarioTarget {
                    model_ref: "shoulder".into(),
                    segment: Segment::Upper,
                    base_pose: KinematicParams::new([0.0, 0.0, 0.0, -30.0, -180.0, 1000.0]).expect("valid pose"),
                    profile: None,
                },
                ScenarioTarget {
                    model_ref: "lumbar".into(),
                    segment: Segment::Lower,
                    base_pose: KinematicParams::new([0.0, 0.0, 0.0, -30.0, 120.0, 1000.0]).expect("valid pose"),
                    profile: Some(SwayProfile {
                        seed: 2,
                        ..SwayProfile::default()
                    }),
                },
            ],
            anatomical_frame: AnatomicalFrame::new(RigidTransform::from_rotation(
                nalgebra::Rotation3::identity(),
                Vector3::new(0.0, 0.0, 1100.0),
            )),
            render: RenderConfig::default(),
            base_dir: None,
        }
    }
}

/// Ground truth and observations for one target.
#[derive(Debug, Clone)]
pub struct SimulatedTarget {
    pub model: GeometricTargetModel,
    pub segment: Segment,
    pub truth: Vec<KinematicParams>,
    pub observations: Vec<Vec<FeatureObservation>>,
    /// Anatomical trajectory of the target's virtual point.
    pub truth_trajectory: SwayTrajectory,
}

#[derive(Debug, Clone)]
pub struct Simulation {
    pub rate_hz: f64,
    pub targets: Vec<SimulatedTarget>,
}

impl Scenario {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut s: Scenario = serde_json::from_str(&text).map_err(|e| Error::format(path, e))?;
        s.base_dir = path.parent().map(Path::to_path_buf);
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        self.profile.validate()?;
        self.noise.validate()?;
        self.camera.validate()?;
        self.render.validate()?;
        if self.image_width == 0 || self.image_height == 0 {
            return Err(Error::EmptyImage);
        }
        if self.targets.is_empty() {
            return Err(Error::InvalidParameter("scenario has no targets".into()));
        }
        for t in &self.targets {
            if let Some(p) = &t.profile {
                p.validate()?;
                if p.rate_hz != self.profile.rate_hz || p.frame_count() != self.profile.frame_count() {
                    return Err(Error::InvalidParameter(format!(
                        "profile of '{}' must share the scenario timebase",
                        t.model_ref
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn models(&self) -> Result<Vec<GeometricTargetModel>> {
        self.targets
            .iter()
            .map(|t| GeometricTargetModel::resolve(&t.model_ref, self.base_dir.as_deref()))
            .collect()
    }

    /// Ground-truth poses, noisy observations and truth trajectories of every target.
    ///
    /// Target `i` draws observation noise from seed `noise.seed + i`.
    pub fn run(&self) -> Result<Simulation> {
        self.validate()?;
        let models = self.models()?;
        let mut targets = Vec::with_capacity(models.len());
        for (i, (entry, model)) in self.targets.iter().zip(models).enumerate() {
            let profile = entry.profile.unwrap_or(self.profile);
            let truth = generate_trajectory(&profile, &entry.base_pose)?;
            let noise = NoiseSpec {
                seed: self.noise.seed.wrapping_add(i as u64),
                ..self.noise
            };
            let observations = render_observations(&truth, &model, &self.camera, &noise)?;
            let offset = model.virtual_offset();
            let samples = truth
                .iter()
                .map(|theta| to_anatomical(&self.anatomical_frame, &virtual_point(theta, &offset)))
                .collect();
            let truth_trajectory = SwayTrajectory::from_samples(profile.rate_hz, entry.segment, samples)?;
            targets.push(SimulatedTarget {
                model,
                segment: entry.segment,
                truth,
                observations,
                truth_trajectory,
            });
        }
        Ok(Simulation {
            rate_hz: self.profile.rate_hz,
            targets,
        })
    }

    /// Raster frame `k` showing every target at its true pose.
    pub fn render_frame(&self, sim: &Simulation, k: usize) -> Result<GrayImage> {
        let posed: Vec<(KinematicParams, &GeometricTargetModel)> =
            sim.targets.iter().map(|t| (t.truth[k], &t.model)).collect();
        render_scene(&posed, &self.camera, self.image_width, self.image_height, &self.render)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_scenario_runs() {
        let s = Scenario {
            profile: SwayProfile {
                duration_sec: 1.0,
                ..SwayProfile::default()
            },
            targets: Scenario::default()
                .targets
                .into_iter()
                .map(|mut t| {
                    t.profile = t.profile.map(|p| SwayProfile { duration_sec: 1.0, ..p });
                    t
                })
                .collect(),
            ..Scenario::default()
        };
        let sim = s.run().unwrap();
        assert_eq!(sim.targets.len(), 2);
        assert_eq!(sim.targets[0].truth.len(), 30);
        assert_eq!(sim.targets[1].truth_trajectory.len(), 30);
        let img = s.render_frame(&sim, 0).unwrap();
        assert_eq!((img.width(), img.height()), (2048, 2048));
    }

    #[test]
    fn json_round_trip() {
        let s = Scenario::default();
        let text = serde_json::to_string_pretty(&s).unwrap();
        let back: Scenario = serde_json::from_str(&text).unwrap();
        assert_eq!(back, s);
        let minimal: Scenario = serde_json::from_str("{}").unwrap();
        assert_eq!(minimal, s);
    }

    #[test]
    fn mismatched_target_timebase() {
        let mut s = Scenario::default();
        s.targets[1].profile = Some(SwayProfile {
            rate_hz: 60.0,
            ..SwayProfile::default()
        });
        assert!(s.validate().is_err());
    }
}
