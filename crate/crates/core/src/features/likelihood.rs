use std::f64::consts::FRAC_PI_4;

use rayon::prelude::*;

use super::GrayImage;
use crate::error::{Error, Result};

pub const KERNEL_RADIUS: usize = 5;
pub const KERNEL_SIZE: usize = 2 * KERNEL_RADIUS + 1;
const SIGMA: f64 = 2.0;
/// Pixels closer than this to a quadrant boundary belong to no quadrant.
const BOUNDARY_BAND: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct LikelihoodMap {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl LikelihoodMap {
    pub fn from_vec(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::InvalidParameter("likelihood map size mismatch".into()));
        }
        if data.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::InvalidParameter("likelihood must be non-negative".into()));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(0.0, f64::max)
    }

    /// Pixel with the largest likelihood (first in raster order on ties).
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0;
        for (i, v) in self.data.iter().enumerate() {
            if *v > self.data[best] {
                best = i;
            }
        }
        (best % self.width, best / self.width)
    }
}

/// Four quadrant kernels of one saddle prototype.
///
/// `a`/`b` cover one pair of opposite quadrants, `c`/`d` the other pair.
struct Prototype {
    kernels: [Vec<f64>; 4],
}

impl Prototype {
    fn new(angle1: f64, angle2: f64) -> Self {
        let mut kernels: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; KERNEL_SIZE * KERNEL_SIZE]);
        let r = KERNEL_RADIUS as isize;
        let (n1, n2) = ((-angle1.sin(), angle1.cos()), (-angle2.sin(), angle2.cos()));
        for v in -r..=r {
            for u in -r..=r {
                let (uf, vf) = (u as f64, v as f64);
                let w = (-(uf * uf + vf * vf) / (2.0 * SIGMA * SIGMA)).exp();
                let s1 = uf * n1.0 + vf * n1.1;
                let s2 = uf * n2.0 + vf * n2.1;
                let idx = ((v + r) as usize) * KERNEL_SIZE + (u + r) as usize;
                let slot = match (s1, s2) {
                    (a, b) if a <= -BOUNDARY_BAND && b <= -BOUNDARY_BAND => Some(0),
                    (a, b) if a >= BOUNDARY_BAND && b >= BOUNDARY_BAND => Some(1),
                    (a, b) if a <= -BOUNDARY_BAND && b >= BOUNDARY_BAND => Some(2),
                    (a, b) if a >= BOUNDARY_BAND && b <= -BOUNDARY_BAND => Some(3),
                    _ => None,
                };
                if let Some(k) = slot {
                    kernels[k][idx] = w;
                }
            }
        }
        for k in &mut kernels {
            let sum: f64 = k.iter().sum();
            k.iter_mut().for_each(|v| *v /= sum);
        }
        Self { kernels }
    }
}

fn prototypes() -> [Prototype; 2] {
    [
        Prototype::new(0.0, std::f64::consts::FRAC_PI_2),
        Prototype::new(FRAC_PI_4, -FRAC_PI_4),
    ]
}

/// Saddle score of one prototype: both polarities, min-composed.
#[inline]
fn saddle_score(f: [f64; 4]) -> f64 {
    let mu = 0.25 * (f[0] + f[1] + f[2] + f[3]);
    let bright_ab = (f[0] - mu).min(f[1] - mu).min((mu - f[2]).min(mu - f[3]));
    let bright_cd = (mu - f[0]).min(mu - f[1]).min((f[2] - mu).min(f[3] - mu));
    bright_ab.max(bright_cd)
}

/// Per-pixel checkerboard-junction likelihood.
///
/// The maximum over two prototype orientations (0° and 45°) and both
/// polarities; a border band of the kernel radius is zero.
pub fn corner_likelihood(image: &GrayImage) -> Result<LikelihoodMap> {
    let (w, h) = (image.width(), image.height());
    if w < KERNEL_SIZE || h < KERNEL_SIZE {
        return Err(Error::ImageTooSmall {
            width: w,
            height: h,
            kernel: KERNEL_SIZE,
        });
    }
    let protos = prototypes();
    let px = image.as_slice();

    // Integral image of "differs from right/down neighbor"; a window with no
    // variation has equal responses in every quadrant and scores exactly zero.
    let mut integral = vec![0u32; (w + 1) * (h + 1)];
    for y in 0..h {
        let mut row = 0u32;
        for x in 0..w {
            let v = px[y * w + x];
            let varies = (x + 1 < w && px[y * w + x + 1] != v) || (y + 1 < h && px[(y + 1) * w + x] != v);
            row += varies as u32;
            integral[(y + 1) * (w + 1) + x + 1] = integral[y * (w + 1) + x + 1] + row;
        }
    }
    let window_varies = |x: usize, y: usize| {
        let (x0, y0) = (x - KERNEL_RADIUS, y - KERNEL_RADIUS);
        let (x1, y1) = (x + KERNEL_RADIUS + 1, y + KERNEL_RADIUS + 1);
        let s = integral[y1 * (w + 1) + x1] + integral[y0 * (w + 1) + x0]
            - integral[y0 * (w + 1) + x1]
            - integral[y1 * (w + 1) + x0];
        s > 0
    };

    let r = KERNEL_RADIUS;
    let mut data = vec![0.0; w * h];
    data.par_chunks_mut(w)
        .enumerate()
        .filter(|(y, _)| *y >= r && *y + r < h)
        .for_each(|(y, row)| {
            for x in r..w - r {
                if !window_varies(x, y) {
                    continue;
                }
                let mut best = 0.0f64;
                for proto in &protos {
                    let mut f = [0.0; 4];
                    for (k, kernel) in proto.kernels.iter().enumerate() {
                        let mut acc = 0.0;
                        for kv in 0..KERNEL_SIZE {
                            let src = &px[(y + kv - r) * w + x - r..(y + kv - r) * w + x + r + 1];
                            let ker = &kernel[kv * KERNEL_SIZE..(kv + 1) * KERNEL_SIZE];
                            acc += src.iter().zip(ker).map(|(a, b)| a * b).sum::<f64>();
                        }
                        f[k] = acc;
                    }
                    best = best.max(saddle_score(f));
                }
                row[x] = best;
            }
        });
    Ok(LikelihoodMap {
        width: w,
        height: h,
        data,
    })
}
