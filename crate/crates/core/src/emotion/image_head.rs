use super::{EmotionDistribution, N_EMOTIONS};
use crate::canvas::{CanvasImage, ImageGrad};
use crate::encoders::{ImageEncoder, ImageEncoding, WeightFile};
use crate::error::{Error, Result};

const HEAD_DOMAIN: u64 = 0xe3d0_4ead_0000_0005;
const HEAD_SCALE: f64 = 2.0;

/// Linear head over image embeddings: `softmax(we e + be)`.
#[derive(Clone, Debug, PartialEq)]
pub struct EmotionHead {
    dim: usize,
    we: Vec<f64>,
    be: [f64; N_EMOTIONS],
}

/// Forward state of [`EmotionHead::forward`].
#[derive(Clone, Debug)]
pub struct ImageEmotion {
    pub distribution: EmotionDistribution,
    encoding: ImageEncoding,
}

impl EmotionHead {
    pub fn new(dim: usize, we: Vec<f64>, be: [f64; N_EMOTIONS]) -> Result<Self> {
        if we.len() != N_EMOTIONS * dim {
            return Err(Error::format(format!(
                "emotion head has {} weights, expected {}",
                we.len(),
                N_EMOTIONS * dim
            )));
        }
        Ok(Self { dim, we, be })
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            we: vec![0.0; N_EMOTIONS * dim],
            be: [0.0; N_EMOTIONS],
        }
    }

    /// Reference head with normal weights and zero bias.
    pub fn seeded(dim: usize, seed: u64) -> Self {
        let we = crate::encoders::seeded_gaussian(seed, HEAD_DOMAIN, N_EMOTIONS, dim, HEAD_SCALE);
        Self {
            dim,
            we,
            be: [0.0; N_EMOTIONS],
        }
    }

    /// Loads `we [9 x dim]` and `be [9]`.
    pub fn from_weights(w: &WeightFile, dim: usize) -> Result<Self> {
        let we = w.expect("we", &[N_EMOTIONS, dim])?.to_f64();
        let be = w.expect("be", &[N_EMOTIONS])?.to_f64();
        Ok(Self {
            dim,
            we,
            be: be.try_into().expect("shape checked"),
        })
    }

    /// Tensors from `w` when present, the seeded head otherwise.
    pub fn from_weights_or_seeded(w: Option<&WeightFile>, dim: usize, seed: u64) -> Result<Self> {
        match w.filter(|w| w.contains("we") || w.contains("be")) {
            Some(w) => Self::from_weights(w, dim),
            None => Ok(Self::seeded(dim, seed)),
        }
    }

    pub fn write_into(&self, w: &mut WeightFile) -> Result<()> {
        w.insert_f64("we", &[N_EMOTIONS, self.dim], &self.we)?;
        w.insert_f64("be", &[N_EMOTIONS], &self.be)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn forward(&self, encoder: &ImageEncoder, img: &CanvasImage) -> Result<ImageEmotion> {
        if encoder.dim() != self.dim {
            return Err(Error::format(format!(
                "emotion head expects {}-dim embeddings, encoder produces {}",
                self.dim,
                encoder.dim()
            )));
        }
        let encoding = encoder.forward(img)?;
        let e = encoding.embedding.values();
        let mut logits = self.be;
        for (k, row) in self.we.chunks_exact(self.dim).enumerate() {
            logits[k] += row.iter().zip(e).map(|(a, b)| a * b).sum::<f64>();
        }
        Ok(ImageEmotion {
            distribution: EmotionDistribution::softmax(&logits),
            encoding,
        })
    }

    /// Pixel gradient of `<grad, probs>`.
    pub fn backward(
        &self,
        encoder: &ImageEncoder,
        state: &ImageEmotion,
        grad: &[f64; N_EMOTIONS],
    ) -> ImageGrad {
        let p = &state.distribution.probs;
        let mean: f64 = p.iter().zip(grad).map(|(a, b)| a * b).sum();
        let mut g_e = vec![0.0; self.dim];
        for (k, row) in self.we.chunks_exact(self.dim).enumerate() {
            let g_logit = p[k] * (grad[k] - mean);
            for (ge, w) in g_e.iter_mut().zip(row) {
                *ge += g_logit * w;
            }
        }
        encoder.backward(&state.encoding, &g_e)
    }
}

/// Emotion distribution of an image under the seeded reference encoder.
pub fn image_emotion(img: &CanvasImage, head: &EmotionHead, seed: u64) -> Result<EmotionDistribution> {
    let encoder = ImageEncoder::new(head.dim(), seed);
    Ok(head.forward(&encoder, img)?.distribution)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::emotion::Emotion;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(w: usize, h: usize, seed: u64) -> CanvasImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let px = (0..w * h)
            .map(|_| [rng.random(), rng.random(), rng.random()])
            .collect();
        CanvasImage::new(w, h, px).unwrap()
    }

    #[test]
    fn zero_head_is_uniform() {
        let d = image_emotion(&random_image(16, 16, 1), &EmotionHead::zeros(128), 3).unwrap();
        for p in d.probs {
            assert!((p - 1.0 / 9.0).abs() < 1e-15);
        }
    }

    #[test]
    fn equal_images_equal_distributions() {
        let head = EmotionHead::seeded(64, 2);
        let a = image_emotion(&random_image(20, 12, 4), &head, 1).unwrap();
        let b = image_emotion(&random_image(20, 12, 4), &head, 1).unwrap();
        assert_eq!(a, b);
        a.validate().unwrap();
    }

    #[test]
    fn one_hot_vjp_matches_differences() {
        let img = random_image(18, 14, 6);
        let head = EmotionHead::seeded(32, 7);
        let enc = ImageEncoder::new(32, 8);
        let mut g = [0.0; N_EMOTIONS];
        g[Emotion::Awe.index()] = 1.0;
        let state = head.forward(&enc, &img).unwrap();
        let grad = head.backward(&enc, &state, &g);
        let f = |im: &CanvasImage| head.forward(&enc, im).unwrap().distribution.probs[2];
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let idx = rng.random_range(0..img.pixels().len());
            let ch = rng.random_range(0..3);
            let mut plus = img.clone().into_pixels();
            plus[idx][ch] += 1e-4;
            let mut minus = img.clone().into_pixels();
            minus[idx][ch] -= 1e-4;
            let fd = (f(&CanvasImage::new(18, 14, plus).unwrap())
                - f(&CanvasImage::new(18, 14, minus).unwrap()))
                / 2e-4;
            let an = grad.data[idx][ch];
            let err = (fd - an).abs();
            assert!(err <= 1e-6 || err / fd.abs().max(an.abs()) < 1e-3, "{an} vs {fd}");
        }
    }

    #[test]
    fn weight_file_shapes() {
        let head = EmotionHead::seeded(16, 1);
        let mut w = WeightFile::new();
        head.write_into(&mut w).unwrap();
        let back = EmotionHead::from_weights(&w, 16).unwrap();
        assert_eq!(back.dim(), 16);
        assert!(matches!(EmotionHead::from_weights(&w, 8), Err(Error::Format(_))));
        let enc = ImageEncoder::new(8, 0);
        assert!(head.forward(&enc, &random_image(4, 4, 0)).is_err());
    }
}
