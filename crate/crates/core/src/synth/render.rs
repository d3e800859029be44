use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::camera::{project_distorted, BoardGeometry, CameraIntrinsics, PixelPoint, RigidTransform};
use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::pose::KinematicParams;
use crate::target::{BodyOffset, GeometricTargetModel};

/// Appearance of rendered checker junctions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderConfig {
    /// Half the side of each junction's 2x2 checker patch, pixels.
    pub patch_half_size_px: f64,
    /// Standard deviation of the Gaussian point-spread applied before pixel integration.
    pub blur_sigma_px: f64,
    /// Difference between the light and dark squares.
    pub contrast: f64,
    pub background: f64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            patch_half_size_px: 8.0,
            blur_sigma_px: 0.8,
            contrast: 0.8,
            background: 0.5,
        }
    }
}

impl RenderConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.patch_half_size_px > 0.0 && self.patch_half_size_px.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "patch half size must be positive, got {}",
                self.patch_half_size_px
            )));
        }
        if !(self.blur_sigma_px >= 0.0 && self.blur_sigma_px.is_finite()) {
            return Err(Error::InvalidParameter(format!("blur must be >= 0, got {}", self.blur_sigma_px)));
        }
        if !self.contrast.is_finite() || !(0.0..=1.0).contains(&self.background) {
            return Err(Error::InvalidParameter("contrast and background must be finite, background in [0, 1]".into()));
        }
        Ok(())
    }
}

fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Antiderivative of the blurred unit step `Φ(x / σ)`.
fn blurred_ramp(x: f64, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return x.max(0.0);
    }
    let z = x / sigma;
    let pdf = (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
    x * std_normal_cdf(z) + sigma * pdf
}

/// Pixel-integrated blurred profile `sgn(u) 1[|u| < h]` for a pixel whose center is `d` from the junction.
fn profile(d: f64, h: f64, sigma: f64) -> f64 {
    let cell = |c: f64| blurred_ramp(c + 0.5, sigma) - blurred_ramp(c - 0.5, sigma);
    2.0 * cell(d) - cell(d - h) - cell(d + h)
}

/// Adds one axis-aligned 2x2 checker junction centered at `center` to `data`
/// (row-major, `width x height`, background already present).
pub fn render_saddle(data: &mut [f64], width: usize, height: usize, center: &PixelPoint, config: &RenderConfig) {
    let h = config.patch_half_size_px;
    let reach = h + 5.0 * config.blur_sigma_px + 1.0;
    let x0 = (center.x - reach).floor().max(0.0) as usize;
    let y0 = (center.y - reach).floor().max(0.0) as usize;
    let x1 = ((center.x + reach).ceil().max(0.0) as usize).min(width.saturating_sub(1));
    let y1 = ((center.y + reach).ceil().max(0.0) as usize).min(height.saturating_sub(1));
    if x0 > x1 || y0 > y1 {
        return;
    }
    let ex: Vec<f64> = (x0..=x1).map(|x| profile(x as f64 - center.x, h, config.blur_sigma_px)).collect();
    for y in y0..=y1 {
        let ey = profile(y as f64 - center.y, h, config.blur_sigma_px);
        if ey == 0.0 {
            continue;
        }
        let row = &mut data[y * width..(y + 1) * width];
        for (x, e) in (x0..=x1).zip(&ex) {
            row[x] += 0.5 * config.contrast * e * ey;
        }
    }
}

/// Mid-gray frame with a checker junction at each projected model feature.
///
/// Features behind the camera or outside the frame are skipped with a warning.
pub fn render_frame(
    theta: &KinematicParams,
    model: &GeometricTargetModel,
    intrinsics: &CameraIntrinsics,
    width: usize,
    height: usize,
    config: &RenderConfig,
) -> Result<GrayImage> {
    render_scene(&[(*theta, model)], intrinsics, width, height, config)
}

/// Several posed targets in one frame.
pub fn render_scene(
    targets: &[(KinematicParams, &GeometricTargetModel)],
    intrinsics: &CameraIntrinsics,
    width: usize,
    height: usize,
    config: &RenderConfig,
) -> Result<GrayImage> {
    config.validate()?;
    if width == 0 || height == 0 {
        return Err(Error::EmptyImage);
    }
    let mut data = vec![config.background; width * height];
    for (theta, model) in targets {
        draw_model(&mut data, width, height, theta, model, intrinsics, config);
    }
    GrayImage::from_vec(width, height, data)
}

/// Calibration board view: one junction per inner corner.
pub fn render_board(
    board: &BoardGeometry,
    pose: &RigidTransform,
    intrinsics: &CameraIntrinsics,
    width: usize,
    height: usize,
    config: &RenderConfig,
) -> Result<GrayImage> {
    board.validate()?;
    let model = GeometricTargetModel::with_shape("board", board.corners(), BodyOffset::default())?;
    let theta = KinematicParams::from_transform(pose)?;
    render_frame(&theta, &model, intrinsics, width, height, config)
}

fn draw_model(
    data: &mut [f64],
    width: usize,
    height: usize,
    theta: &KinematicParams,
    model: &GeometricTargetModel,
    intrinsics: &CameraIntrinsics,
    config: &RenderConfig,
) {
    let pose = theta.to_transform();
    for (i, g) in model.points().iter().enumerate() {
        let p = match project_distorted(intrinsics, &pose, g) {
            Ok(p) => p,
            Err(e) => {
                log::warn!("feature {i} of '{}' not rendered: {e}", model.name());
                continue;
            }
        };
        if !(p.x >= 0.0 && p.y >= 0.0 && p.x <= (width - 1) as f64 && p.y <= (height - 1) as f64) {
            log::warn!("feature {i} of '{}' at ({:.1}, {:.1}) is outside the frame", model.name(), p.x, p.y);
            continue;
        }
        render_saddle(data, width, height, &p, config);
    }
}

/// Adds seeded Gaussian intensity noise; results are clamped to `[0, 1]`.
pub fn add_intensity_noise(image: &GrayImage, sigma: f64, seed: u64) -> Result<GrayImage> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidParameter(format!("intensity noise must be >= 0, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(image.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = Normal::new(0.0, sigma).expect("positive sigma");
    let data = image.as_slice().iter().map(|v| v + n.sample(&mut rng)).collect();
    GrayImage::from_vec(image.width(), image.height(), data)
}
