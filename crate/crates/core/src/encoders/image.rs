use super::{mat_t_vec, mat_vec, seeded_gaussian, Embedding, TanhNormalize, WeightFile};
use crate::canvas::{CanvasImage, ImageGrad, Resampler};
use crate::error::Result;

/// Images are resized to this many pixels per side before projection.
pub const ENCODER_INPUT_SIDE: usize = 32;
const INPUT_DIM: usize = ENCODER_INPUT_SIDE * ENCODER_INPUT_SIDE * 3;
const DOMAIN: u64 = 0x1a9e_5eed_0000_0001;
const BIAS_SCALE: f64 = 0.1;

pub(super) const PROJ_TENSOR: &str = "image_proj";
pub(super) const BIAS_TENSOR: &str = "image_bias";

/// Reference image encoder: 32x32 bilinear resize, flatten, random
/// projection plus bias, `tanh`, L2 normalization.
#[derive(Clone, Debug)]
pub struct ImageEncoder {
    dim: usize,
    proj: Vec<f64>,
    bias: Vec<f64>,
}

/// Forward state needed to pull an embedding gradient back onto pixels.
#[derive(Clone, Debug)]
pub struct ImageEncoding {
    pub embedding: Embedding,
    tail: TanhNormalize,
    resize: Resampler,
}

impl ImageEncoder {
    pub fn new(dim: usize, seed: u64) -> Self {
        let proj = seeded_gaussian(seed, DOMAIN, dim, INPUT_DIM, 1.0 / (INPUT_DIM as f64).sqrt());
        let bias = seeded_gaussian(seed, DOMAIN.rotate_left(17), dim, 1, BIAS_SCALE);
        Self { dim, proj, bias }
    }

    /// Loads `image_proj [dim x 3072]` and `image_bias [dim]`.
    pub fn from_weights(w: &WeightFile, dim: usize) -> Result<Self> {
        let proj = w.expect(PROJ_TENSOR, &[dim, INPUT_DIM])?.to_f64();
        let bias = w.expect(BIAS_TENSOR, &[dim])?.to_f64();
        Ok(Self { dim, proj, bias })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn forward(&self, img: &CanvasImage) -> Result<ImageEncoding> {
        let resize = Resampler::resize(
            img.width(),
            img.height(),
            ENCODER_INPUT_SIDE,
            ENCODER_INPUT_SIDE,
        );
        let small = resize.apply_raw(img.pixels());
        let x: Vec<f64> = small.iter().flatten().copied().collect();
        let mut h = vec![0.0; self.dim];
        mat_vec(&self.proj, &x, &mut h);
        for (hi, b) in h.iter_mut().zip(&self.bias) {
            *hi += b;
        }
        let (embedding, tail) = TanhNormalize::forward(&h)?;
        Ok(ImageEncoding {
            embedding,
            tail,
            resize,
        })
    }

    pub fn encode(&self, img: &CanvasImage) -> Result<Embedding> {
        Ok(self.forward(img)?.embedding)
    }

    /// Pixel gradient of `<grad, embedding>`.
    pub fn backward(&self, enc: &ImageEncoding, grad: &[f64]) -> ImageGrad {
        assert_eq!(grad.len(), self.dim, "embedding gradient dimension");
        let g_h = enc.tail.backward(&enc.embedding, grad);
        let mut g_x = vec![0.0; INPUT_DIM];
        mat_t_vec(&self.proj, &g_h, &mut g_x);
        let small = ImageGrad {
            width: ENCODER_INPUT_SIDE,
            height: ENCODER_INPUT_SIDE,
            data: g_x.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect(),
        };
        enc.resize.transpose(&small)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(w: usize, h: usize, seed: u64) -> CanvasImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let px = (0..w * h)
            .map(|_| {
                [
                    rng.random_range(0.05..0.95),
                    rng.random_range(0.05..0.95),
                    rng.random_range(0.05..0.95),
                ]
            })
            .collect();
        CanvasImage::new(w, h, px).unwrap()
    }

    #[test]
    fn deterministic_and_unit_norm() {
        let img = random_image(40, 30, 1);
        let a = ImageEncoder::new(128, 9).encode(&img).unwrap();
        let b = ImageEncoder::new(128, 9).encode(&img).unwrap();
        assert_eq!(a, b);
        assert!((a.norm() - 1.0).abs() < 1e-6);
        let c = ImageEncoder::new(128, 10).encode(&img).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn backward_matches_differences_on_random_pixels() {
        let img = random_image(24, 20, 2);
        let enc = ImageEncoder::new(32, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g: Vec<f64> = (0..32).map(|_| rng.random_range(-1.0..1.0)).collect();
        let f = |im: &CanvasImage| -> f64 {
            let e = enc.encode(im).unwrap();
            e.values().iter().zip(&g).map(|(a, b)| a * b).sum()
        };
        let fwd = enc.forward(&img).unwrap();
        let grad = enc.backward(&fwd, &g);
        for _ in 0..20 {
            let idx = rng.random_range(0..img.pixels().len());
            let ch = rng.random_range(0..3);
            let mut plus = img.clone().into_pixels();
            plus[idx][ch] += 1e-4;
            let mut minus = img.clone().into_pixels();
            minus[idx][ch] -= 1e-4;
            let fd = (f(&CanvasImage::new(24, 20, plus).unwrap())
                - f(&CanvasImage::new(24, 20, minus).unwrap()))
                / 2e-4;
            let an = grad.data[idx][ch];
            let err = (fd - an).abs();
            assert!(err <= 1e-6 || err / fd.abs().max(an.abs()) < 1e-3, "{an} vs {fd}");
        }
    }

    #[test]
    fn weights_override() {
        let mut w = WeightFile::new();
        w.insert(PROJ_TENSOR, &[2, INPUT_DIM], vec![0.0; 2 * INPUT_DIM])
            .unwrap();
        w.insert(BIAS_TENSOR, &[2], vec![1.0, 0.0]).unwrap();
        let enc = ImageEncoder::from_weights(&w, 2).unwrap();
        let e = enc.encode(&random_image(8, 8, 3)).unwrap();
        assert_eq!(e.values(), &[1.0, 0.0]);
        assert!(ImageEncoder::from_weights(&w, 3).is_err());
    }
}
