//! RGB rasters, PNG I/O, bilinear sampling and the random view augmentations
//! applied to a simulated painting before it is encoded.
//!
//! Continuous image coordinates put the center of pixel `(i, j)` at `(i, j)`.
//! Sampling outside `[0, w-1] x [0, h-1]` clamps to the border.

mod augment;
mod png_io;

pub use augment::{augment_views, plan_views, AugmentationSpec, AugmentedViews};
pub use png_io::{load_png, save_png};

use crate::error::{Error, Result};

pub type Rgb = [f64; 3];

/// An RGB image with every channel in `[0, 1]`, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct CanvasImage {
    width: usize,
    height: usize,
    pixels: Vec<Rgb>,
}

impl CanvasImage {
    pub fn new(width: usize, height: usize, pixels: Vec<Rgb>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::param(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        if pixels.len() != width * height {
            return Err(Error::param(format!(
                "pixel count {} does not match {width}x{height}",
                pixels.len()
            )));
        }
        if let Some(bad) = pixels
            .iter()
            .flatten()
            .find(|v| !(0.0..=1.0).contains(*v))
        {
            return Err(Error::param(format!("channel value {bad} outside [0, 1]")));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, color: Rgb) -> Result<Self> {
        Self::new(width, height, vec![color; width * height])
    }

    /// Builds an image from unchecked values, clamping every channel into `[0, 1]`.
    pub(crate) fn from_clamped(width: usize, height: usize, mut pixels: Vec<Rgb>) -> Self {
        debug_assert_eq!(pixels.len(), width * height);
        for v in pixels.iter_mut().flatten() {
            *v = v.clamp(0.0, 1.0);
        }
        Self {
            width,
            height,
            pixels,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[Rgb] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<Rgb> {
        self.pixels
    }

    pub fn pixel(&self, x: usize, y: usize) -> Rgb {
        self.pixels[y * self.width + x]
    }

    pub fn same_shape(&self, other: &CanvasImage) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn max_abs_diff(&self, other: &CanvasImage) -> f64 {
        assert!(self.same_shape(other), "image shapes differ");
        self.pixels
            .iter()
            .flatten()
            .zip(other.pixels.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// A gradient (or any unconstrained field) with the same layout as a [`CanvasImage`].
#[derive(Clone, Debug, PartialEq)]
pub struct ImageGrad {
    pub width: usize,
    pub height: usize,
    pub data: Vec<Rgb>,
}

impl ImageGrad {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![[0.0; 3]; width * height],
        }
    }

    pub fn zeros_like(img: &CanvasImage) -> Self {
        Self::zeros(img.width, img.height)
    }

    pub fn matches(&self, img: &CanvasImage) -> bool {
        self.width == img.width && self.height == img.height && self.data.len() == img.pixels.len()
    }

    /// `self += scale * other`
    pub fn add_scaled(&mut self, other: &ImageGrad, scale: f64) {
        assert_eq!(self.data.len(), other.data.len(), "gradient shapes differ");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            for c in 0..3 {
                a[c] += scale * b[c];
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for v in self.data.iter_mut().flatten() {
            *v *= s;
        }
    }

    pub fn dot(&self, img: &CanvasImage) -> f64 {
        assert!(self.matches(img), "gradient and image shapes differ");
        self.data
            .iter()
            .flatten()
            .zip(img.pixels.iter().flatten())
            .map(|(g, v)| g * v)
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().flatten().all(|v| v.is_finite())
    }
}

/// One bilinear lookup: four source taps with weights, plus the weight
/// derivatives with respect to the sampling coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BilinearTap {
    pub index: [usize; 4],
    /// Interpolation fractions along x and y.
    pub frac: [f64; 2],
    pub weight: [f64; 4],
    pub d_du: [f64; 4],
    pub d_dv: [f64; 4],
}

fn axis_taps(coord: f64, len: usize) -> (usize, usize, f64, f64) {
    let max = (len - 1) as f64;
    let inside = (0.0..=max).contains(&coord);
    let c = coord.clamp(0.0, max);
    let i0 = (c.floor() as usize).min(len.saturating_sub(2));
    let i1 = (i0 + 1).min(len - 1);
    let frac = if i1 == i0 { 0.0 } else { c - i0 as f64 };
    let slope = if inside && i1 != i0 { 1.0 } else { 0.0 };
    (i0, i1, frac, slope)
}

impl BilinearTap {
    pub fn new(width: usize, height: usize, u: f64, v: f64) -> Self {
        let (x0, x1, fx, sx) = axis_taps(u, width);
        let (y0, y1, fy, sy) = axis_taps(v, height);
        let index = [
            y0 * width + x0,
            y0 * width + x1,
            y1 * width + x0,
            y1 * width + x1,
        ];
        let weight = [
            (1.0 - fx) * (1.0 - fy),
            fx * (1.0 - fy),
            (1.0 - fx) * fy,
            fx * fy,
        ];
        let d_du = [-sx * (1.0 - fy), sx * (1.0 - fy), -sx * fy, sx * fy];
        let d_dv = [-sy * (1.0 - fx), -sy * fx, sy * (1.0 - fx), sy * fx];
        Self {
            index,
            frac: [fx, fy],
            weight,
            d_du,
            d_dv,
        }
    }

    /// Interpolated value in lerp form, which reproduces constants exactly.
    fn interpolate(&self, pixels: &[Rgb]) -> Rgb {
        let [p00, p01, p10, p11] = self.index.map(|i| pixels[i]);
        let [fx, fy] = self.frac;
        let mut out = [0.0; 3];
        for c in 0..3 {
            let top = p00[c] + fx * (p01[c] - p00[c]);
            let bottom = p10[c] + fx * (p11[c] - p10[c]);
            out[c] = top + fy * (bottom - top);
        }
        out
    }

    fn apply(&self, pixels: &[Rgb], weights: &[f64; 4]) -> Rgb {
        let mut out = [0.0; 3];
        for k in 0..4 {
            let p = pixels[self.index[k]];
            for c in 0..3 {
                out[c] += weights[k] * p[c];
            }
        }
        out
    }
}

/// Bilinear interpolation at continuous pixel coordinates `(u, v)`, clamped to the border.
pub fn sample_bilinear(img: &CanvasImage, u: f64, v: f64) -> Rgb {
    BilinearTap::new(img.width, img.height, u, v).interpolate(&img.pixels)
}

/// Partial derivatives of [`sample_bilinear`] with respect to `u` and `v`.
pub fn sample_bilinear_coord_grad(img: &CanvasImage, u: f64, v: f64) -> (Rgb, Rgb) {
    let tap = BilinearTap::new(img.width, img.height, u, v);
    (
        tap.apply(&img.pixels, &tap.d_du),
        tap.apply(&img.pixels, &tap.d_dv),
    )
}

/// A fixed linear map from a source raster to an output raster where each
/// output pixel is a bilinear lookup. Forward and transpose are exact.
#[derive(Clone, Debug)]
pub struct Resampler {
    src_width: usize,
    src_height: usize,
    out_width: usize,
    out_height: usize,
    taps: Vec<BilinearTap>,
}

impl Resampler {
    /// Builds a resampler from a function mapping output pixel `(i, j)` to
    /// continuous source coordinates.
    pub fn from_fn(
        src_width: usize,
        src_height: usize,
        out_width: usize,
        out_height: usize,
        coords: impl Fn(usize, usize) -> (f64, f64),
    ) -> Self {
        let mut taps = Vec::with_capacity(out_width * out_height);
        for j in 0..out_height {
            for i in 0..out_width {
                let (u, v) = coords(i, j);
                taps.push(BilinearTap::new(src_width, src_height, u, v));
            }
        }
        Self {
            src_width,
            src_height,
            out_width,
            out_height,
            taps,
        }
    }

    /// Plain resize with pixel-center alignment. Downsampling by an integer
    /// factor of two averages 2x2 blocks.
    pub fn resize(src_width: usize, src_height: usize, out_width: usize, out_height: usize) -> Self {
        let sx = src_width as f64 / out_width as f64;
        let sy = src_height as f64 / out_height as f64;
        Self::from_fn(src_width, src_height, out_width, out_height, |i, j| {
            ((i as f64 + 0.5) * sx - 0.5, (j as f64 + 0.5) * sy - 0.5)
        })
    }

    pub fn src_dims(&self) -> (usize, usize) {
        (self.src_width, self.src_height)
    }

    pub fn out_dims(&self) -> (usize, usize) {
        (self.out_width, self.out_height)
    }

    pub fn apply_raw(&self, src: &[Rgb]) -> Vec<Rgb> {
        assert_eq!(src.len(), self.src_width * self.src_height);
        self.taps.iter().map(|t| t.interpolate(src)).collect()
    }

    pub fn apply(&self, img: &CanvasImage) -> CanvasImage {
        assert_eq!(
            (img.width, img.height),
            (self.src_width, self.src_height),
            "resampler source shape mismatch"
        );
        // Convex combinations stay in range; clamping only removes rounding.
        CanvasImage::from_clamped(self.out_width, self.out_height, self.apply_raw(&img.pixels))
    }

    /// Adds the transpose of this map applied to `upstream` into `acc`.
    pub fn accumulate_transpose(&self, upstream: &[Rgb], acc: &mut [Rgb]) {
        assert_eq!(upstream.len(), self.taps.len());
        assert_eq!(acc.len(), self.src_width * self.src_height);
        for (tap, g) in self.taps.iter().zip(upstream) {
            for k in 0..4 {
                let dst = &mut acc[tap.index[k]];
                for c in 0..3 {
                    dst[c] += tap.weight[k] * g[c];
                }
            }
        }
    }

    pub fn transpose(&self, upstream: &ImageGrad) -> ImageGrad {
        let mut out = ImageGrad::zeros(self.src_width, self.src_height);
        self.accumulate_transpose(&upstream.data, &mut out.data);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp() -> CanvasImage {
        let pixels = (0..12)
            .map(|k| {
                let v = k as f64 / 11.0;
                [v, 1.0 - v, 0.5]
            })
            .collect();
        CanvasImage::new(4, 3, pixels).unwrap()
    }

    #[test]
    fn rejects_out_of_range_and_bad_shapes() {
        assert!(CanvasImage::new(1, 1, vec![[1.5, 0.0, 0.0]]).is_err());
        assert!(CanvasImage::new(2, 2, vec![[0.0; 3]; 3]).is_err());
        assert!(CanvasImage::new(0, 2, vec![]).is_err());
    }

    #[test]
    fn sampling_at_pixel_centers_is_identity() {
        let img = ramp();
        for y in 0..3 {
            for x in 0..4 {
                assert_eq!(sample_bilinear(&img, x as f64, y as f64), img.pixel(x, y));
            }
        }
    }

    #[test]
    fn midpoint_between_black_and_white() {
        let img = CanvasImage::new(2, 1, vec![[0.0; 3], [1.0; 3]]).unwrap();
        assert_eq!(sample_bilinear(&img, 0.5, 0.0), [0.5; 3]);
    }

    #[test]
    fn out_of_range_clamps_to_border() {
        let img = ramp();
        assert_eq!(sample_bilinear(&img, -3.0, 1.2), sample_bilinear(&img, 0.0, 1.2));
        assert_eq!(sample_bilinear(&img, 9.0, 7.0), img.pixel(3, 2));
        let (du, dv) = sample_bilinear_coord_grad(&img, -3.0, -1.0);
        assert_eq!(du, [0.0; 3]);
        assert_eq!(dv, [0.0; 3]);
    }

    #[test]
    fn coordinate_gradient_matches_differences() {
        let img = ramp();
        let (u, v, h) = (1.3, 0.7, 1e-6);
        let (du, dv) = sample_bilinear_coord_grad(&img, u, v);
        let pu = sample_bilinear(&img, u + h, v);
        let mu = sample_bilinear(&img, u - h, v);
        let pv = sample_bilinear(&img, u, v + h);
        let mv = sample_bilinear(&img, u, v - h);
        for c in 0..3 {
            assert!((du[c] - (pu[c] - mu[c]) / (2.0 * h)).abs() < 1e-8);
            assert!((dv[c] - (pv[c] - mv[c]) / (2.0 * h)).abs() < 1e-8);
        }
    }

    #[test]
    fn single_pixel_image_samples_constant() {
        let img = CanvasImage::filled(1, 1, [0.2, 0.4, 0.6]).unwrap();
        assert_eq!(sample_bilinear(&img, 0.3, -2.0), [0.2, 0.4, 0.6]);
    }

    #[test]
    fn transpose_is_adjoint_of_forward() {
        let img = ramp();
        let r = Resampler::resize(4, 3, 7, 5);
        let out = r.apply(&img);
        let mut g = ImageGrad::zeros(7, 5);
        for (k, px) in g.data.iter_mut().enumerate() {
            *px = [k as f64 * 0.1, -(k as f64), 0.25];
        }
        let lhs = g.dot(&out);
        let rhs = r.transpose(&g).dot(&img);
        assert!((lhs - rhs).abs() < 1e-9 * lhs.abs().max(1.0));
    }

    #[test]
    fn halving_resize_averages_blocks() {
        let img = CanvasImage::new(2, 2, vec![[0.0; 3], [1.0; 3], [1.0; 3], [0.0; 3]]).unwrap();
        let out = Resampler::resize(2, 2, 1, 1).apply(&img);
        assert_eq!(out.pixel(0, 0), [0.5; 3]);
    }
}
