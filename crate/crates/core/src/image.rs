//! Row-major grayscale raster with intensities in `[0, 1]`.
//!
//! Pixel `(x, y)` has its center at continuous coordinate `(x, y)`; `x` is the
//! column (u), `y` the row (v).

use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl GrayImage {
    /// Wraps samples, clamping each into `[0, 1]`.
    pub fn from_vec(width: usize, height: usize, mut data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::EmptyImage);
        }
        if data.len() != width * height {
            return Err(Error::InvalidParameter(format!(
                "image {width}x{height} needs {} samples, got {}",
                width * height,
                data.len()
            )));
        }
        for v in &mut data {
            *v = if v.is_finite() { v.clamp(0.0, 1.0) } else { 0.0 };
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::from_vec(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: f64) {
        self.data[y * self.width + x] = value.clamp(0.0, 1.0);
    }

    /// Bilinear sample at continuous `(x, y)`; `None` outside the pixel-center hull.
    pub fn sample_bilinear(&self, x: f64, y: f64) -> Option<f64> {
        if !(x >= 0.0 && y >= 0.0) {
            return None;
        }
        let max_x = (self.width - 1) as f64;
        let max_y = (self.height - 1) as f64;
        if x > max_x || y > max_y {
            return None;
        }
        let x0 = (x.floor() as usize).min(self.width.saturating_sub(2));
        let y0 = (y.floor() as usize).min(self.height.saturating_sub(2));
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let top = self.get(x0, y0) * (1.0 - fx) + self.get(x1, y0) * fx;
        let bottom = self.get(x0, y1) * (1.0 - fx) + self.get(x1, y1) * fx;
        Some(top * (1.0 - fy) + bottom * fy)
    }

    /// Reads an 8-bit binary PGM (P5) frame.
    pub fn read_pgm(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        if !bytes.starts_with(b"P5") {
            return Err(Error::format(path, "not a binary PGM (P5) file"));
        }
        let decoded = image::load_from_memory_with_format(&bytes, image::ImageFormat::Pnm)
            .map_err(|e| Error::format(path, e))?;
        let gray = decoded.to_luma8();
        let (w, h) = gray.dimensions();
        let data = gray.into_raw().into_iter().map(|p| p as f64 / 255.0).collect();
        Self::from_vec(w as usize, h as usize, data)
    }

    /// Writes an 8-bit binary PGM (P5) frame, rounding to the nearest level.
    pub fn write_pgm(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let raw: Vec<u8> = self
            .data
            .iter()
            .map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect();
        let buf = image::GrayImage::from_raw(self.width as u32, self.height as u32, raw)
            .ok_or_else(|| Error::format(path, "raster size mismatch"))?;
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut writer = std::io::BufWriter::new(file);
        let encoder = image::codecs::pnm::PnmEncoder::new(&mut writer).with_subtype(
            image::codecs::pnm::PnmSubtype::Graymap(image::codecs::pnm::SampleEncoding::Binary),
        );
        buf.write_with_encoder(encoder)
            .map_err(|e| Error::format(path, e))
    }

    /// Affine intensity map `a * v + b`, clamped into `[0, 1]`.
    pub fn map_intensity(&self, a: f64, b: f64) -> Self {
        let data = self.data.iter().map(|v| (a * v + b).clamp(0.0, 1.0)).collect();
        Self {
            width: self.width,
            height: self.height,
            data,
        }
    }

    /// 3x3 Sobel gradient at an interior pixel.
    #[inline]
    pub(crate) fn sobel(&self, x: usize, y: usize) -> (f64, f64) {
        let p = |dx: isize, dy: isize| {
            self.get((x as isize + dx) as usize, (y as isize + dy) as usize)
        };
        let gx = (p(1, -1) + 2.0 * p(1, 0) + p(1, 1)) - (p(-1, -1) + 2.0 * p(-1, 0) + p(-1, 1));
        let gy = (p(-1, 1) + 2.0 * p(0, 1) + p(1, 1)) - (p(-1, -1) + 2.0 * p(0, -1) + p(1, -1));
        (gx, gy)
    }
}
