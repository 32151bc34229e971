use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{CanvasImage, ImageGrad, Resampler};
use crate::error::{Error, Result};

/// Random crop-and-warp views taken of a painting before encoding.
///
/// View 0 is always the whole image resized to `output_size_px`; `count`
/// additional views are random square crops whose corners are jittered
/// independently, which turns each crop into a perspective warp.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentationSpec {
    pub count: usize,
    pub min_crop_fraction: f64,
    pub max_corner_jitter_fraction: f64,
    pub output_size_px: usize,
    pub seed: u64,
}

impl Default for AugmentationSpec {
    fn default() -> Self {
        Self {
            count: 8,
            min_crop_fraction: 0.7,
            max_corner_jitter_fraction: 0.05,
            output_size_px: 64,
            seed: 0,
        }
    }
}

impl AugmentationSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.min_crop_fraction > 0.0 && self.min_crop_fraction <= 1.0) {
            return Err(Error::param(format!(
                "min_crop_fraction must be in (0, 1], got {}",
                self.min_crop_fraction
            )));
        }
        if !(0.0..=0.2).contains(&self.max_corner_jitter_fraction) {
            return Err(Error::param(format!(
                "max_corner_jitter_fraction must be in [0, 0.2], got {}",
                self.max_corner_jitter_fraction
            )));
        }
        if self.output_size_px < 8 {
            return Err(Error::param(format!(
                "output_size_px must be at least 8, got {}",
                self.output_size_px
            )));
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }
}

/// Projective map of the unit square onto a quadrilateral with corners
/// ordered (0,0), (1,0), (1,1), (0,1).
struct SquareToQuad {
    a: f64,
    b: f64,
    c: f64,
    d: f64,
    e: f64,
    f: f64,
    g: f64,
    h: f64,
}

impl SquareToQuad {
    fn new(q: [[f64; 2]; 4]) -> Result<Self> {
        let [[x0, y0], [x1, y1], [x2, y2], [x3, y3]] = q;
        let (dx1, dy1) = (x1 - x2, y1 - y2);
        let (dx2, dy2) = (x3 - x2, y3 - y2);
        let (dx3, dy3) = (x0 - x1 + x2 - x3, y0 - y1 + y2 - y3);
        let den = dx1 * dy2 - dx2 * dy1;
        if den.abs() < 1e-12 {
            return Err(Error::param("degenerate warp quadrilateral"));
        }
        let g = (dx3 * dy2 - dx2 * dy3) / den;
        let h = (dx1 * dy3 - dx3 * dy1) / den;
        Ok(Self {
            a: x1 - x0 + g * x1,
            b: x3 - x0 + h * x3,
            c: x0,
            d: y1 - y0 + g * y1,
            e: y3 - y0 + h * y3,
            f: y0,
            g,
            h,
        })
    }

    fn map(&self, s: f64, t: f64) -> (f64, f64) {
        let w = self.g * s + self.h * t + 1.0;
        (
            (self.a * s + self.b * t + self.c) / w,
            (self.d * s + self.e * t + self.f) / w,
        )
    }
}

fn warp_sampler(width: usize, height: usize, size: usize, quad: [[f64; 2]; 4]) -> Result<Resampler> {
    let warp = SquareToQuad::new(quad)?;
    let n = size as f64;
    // Quad corners live in edge coordinates (pixel k spans [k, k+1]); shift
    // by half a pixel into center coordinates for sampling.
    Ok(Resampler::from_fn(width, height, size, size, |i, j| {
        let (x, y) = warp.map((i as f64 + 0.5) / n, (j as f64 + 0.5) / n);
        (x - 0.5, y - 0.5)
    }))
}

/// Builds the per-view sampling maps for an image of the given size. The
/// views depend only on the image dimensions and the spec, never on pixels.
pub fn plan_views(width: usize, height: usize, spec: &AugmentationSpec) -> Result<Vec<Resampler>> {
    spec.validate()?;
    let (w, h) = (width as f64, height as f64);
    let size = spec.output_size_px;
    let mut views = Vec::with_capacity(spec.count + 1);
    views.push(warp_sampler(
        width,
        height,
        size,
        [[0.0, 0.0], [w, 0.0], [w, h], [0.0, h]],
    )?);

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    for _ in 0..spec.count {
        let frac = rng.random_range(spec.min_crop_fraction..=1.0);
        let side = frac * w.min(h);
        if side < 2.0 {
            return Err(Error::param(format!(
                "crop side {side:.3} px is degenerate (< 2 px)"
            )));
        }
        let ox = rng.random::<f64>() * (w - side);
        let oy = rng.random::<f64>() * (h - side);
        let jitter = spec.max_corner_jitter_fraction * side;
        let mut quad = [
            [ox, oy],
            [ox + side, oy],
            [ox + side, oy + side],
            [ox, oy + side],
        ];
        for corner in quad.iter_mut() {
            for c in corner.iter_mut() {
                *c += jitter * (2.0 * rng.random::<f64>() - 1.0);
            }
        }
        views.push(warp_sampler(width, height, size, quad)?);
    }
    Ok(views)
}

/// The rendered views together with the linear maps that produced them.
#[derive(Clone, Debug)]
pub struct AugmentedViews {
    pub views: Vec<CanvasImage>,
    samplers: Vec<Resampler>,
}

impl AugmentedViews {
    pub fn from_samplers(img: &CanvasImage, samplers: Vec<Resampler>) -> Self {
        let views = samplers.par_iter().map(|s| s.apply(img)).collect();
        Self { views, samplers }
    }

    pub fn len(&self) -> usize {
        self.views.len()
    }

    pub fn is_empty(&self) -> bool {
        self.views.is_empty()
    }

    /// Pulls per-view gradients back onto the source image.
    pub fn vjp(&self, upstream: &[ImageGrad]) -> Result<ImageGrad> {
        if upstream.len() != self.samplers.len() {
            return Err(Error::param(format!(
                "expected {} view gradients, got {}",
                self.samplers.len(),
                upstream.len()
            )));
        }
        let (w, h) = self.samplers[0].src_dims();
        let mut acc = ImageGrad::zeros(w, h);
        for (sampler, g) in self.samplers.iter().zip(upstream) {
            if (g.width, g.height) != sampler.out_dims() {
                return Err(Error::param("view gradient shape mismatch"));
            }
            sampler.accumulate_transpose(&g.data, &mut acc.data);
        }
        Ok(acc)
    }
}

pub fn augment_views(img: &CanvasImage, spec: &AugmentationSpec) -> Result<AugmentedViews> {
    let samplers = plan_views(img.width(), img.height(), spec)?;
    Ok(AugmentedViews::from_samplers(img, samplers))
}
