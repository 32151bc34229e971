//! Encoders into a shared unit-norm embedding space for images, audio and
//! text.
//!
//! The reference encoders are seeded random projections followed by `tanh`
//! and L2 normalization. Any projection can be replaced by tensors loaded
//! from a [`WeightFile`].

mod image;
mod sound;
mod text;
mod weights;

pub use image::{ImageEncoder, ImageEncoding, ENCODER_INPUT_SIDE};
pub(crate) use sound::mean_std;
pub use sound::{pool_audio_features, AudioEncoder, AUDIO_POOLED_DIM};
pub use text::{fnv1a_64, text_trigram_counts, TextEncoder, TEXT_HASH_BINS};
pub use weights::{load_weight_file, Tensor, WeightFile, MAGIC};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::audio::FeatureStack;
use crate::canvas::CanvasImage;
use crate::error::{Error, Result};

pub const DEFAULT_DIM: usize = 128;

/// A unit-norm vector in the shared latent space.
#[derive(Clone, Debug, PartialEq)]
pub struct Embedding {
    values: Vec<f64>,
}

impl Embedding {
    /// Normalizes `values` to unit length.
    pub fn from_unnormalized(values: Vec<f64>) -> Result<Self> {
        let norm = l2_norm(&values);
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::Numeric(format!(
                "cannot normalize vector with norm {norm}"
            )));
        }
        Ok(Self {
            values: values.into_iter().map(|v| v / norm).collect(),
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        l2_norm(&self.values)
    }

    pub fn cosine_similarity(&self, other: &Embedding) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum::<f64>()
            / (self.norm() * other.norm())
    }
}

pub(crate) fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Row-major `[rows x cols]` matrix of standard normals scaled by `scale`.
pub(crate) fn seeded_gaussian(seed: u64, domain: u64, rows: usize, cols: usize, scale: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ domain);
    (0..rows * cols)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z * scale
        })
        .collect()
}

/// `out = m x` for a row-major `[out.len() x x.len()]` matrix.
pub(crate) fn mat_vec(m: &[f64], x: &[f64], out: &mut [f64]) {
    let cols = x.len();
    debug_assert_eq!(m.len(), out.len() * cols);
    for (o, row) in out.iter_mut().zip(m.chunks_exact(cols)) {
        *o = row.iter().zip(x).map(|(a, b)| a * b).sum();
    }
}

/// `out = m^T y` for a row-major `[y.len() x out.len()]` matrix.
pub(crate) fn mat_t_vec(m: &[f64], y: &[f64], out: &mut [f64]) {
    let cols = out.len();
    debug_assert_eq!(m.len(), y.len() * cols);
    out.fill(0.0);
    for (row, &g) in m.chunks_exact(cols).zip(y) {
        if g == 0.0 {
            continue;
        }
        for (o, a) in out.iter_mut().zip(row) {
            *o += a * g;
        }
    }
}

/// Shared tail of every encoder: `e = tanh(h) / |tanh(h)|`.
#[derive(Clone, Debug)]
pub(crate) struct TanhNormalize {
    z: Vec<f64>,
    norm: f64,
}

impl TanhNormalize {
    pub(crate) fn forward(h: &[f64]) -> Result<(Embedding, Self)> {
        let z: Vec<f64> = h.iter().map(|v| v.tanh()).collect();
        let norm = l2_norm(&z);
        let emb = Embedding::from_unnormalized(z.clone())?;
        Ok((emb, Self { z, norm }))
    }

    /// Gradient with respect to the pre-activation `h`.
    pub(crate) fn backward(&self, embedding: &Embedding, grad: &[f64]) -> Vec<f64> {
        let e = embedding.values();
        let proj: f64 = e.iter().zip(grad).map(|(a, b)| a * b).sum();
        e.iter()
            .zip(grad)
            .zip(&self.z)
            .map(|((ei, gi), zi)| (gi - ei * proj) / self.norm * (1.0 - zi * zi))
            .collect()
    }
}

/// The three encoders sharing one embedding dimension.
#[derive(Clone, Debug)]
pub struct EncoderSet {
    pub image: ImageEncoder,
    pub audio: AudioEncoder,
    pub text: TextEncoder,
}

impl EncoderSet {
    /// Seeded reference encoders; projections present in `weights` replace
    /// the seeded ones.
    pub fn new(dim: usize, seed: u64, weights: Option<&WeightFile>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::param("embedding dimension must be positive"));
        }
        let image = match weights.filter(|w| w.contains(image::PROJ_TENSOR)) {
            Some(w) => ImageEncoder::from_weights(w, dim)?,
            None => ImageEncoder::new(dim, seed),
        };
        let audio = match weights.filter(|w| w.contains(sound::PROJ_TENSOR)) {
            Some(w) => AudioEncoder::from_weights(w, dim)?,
            None => AudioEncoder::new(dim, seed),
        };
        let text = match weights.filter(|w| w.contains(text::PROJ_TENSOR)) {
            Some(w) => TextEncoder::from_weights(w, dim)?,
            None => TextEncoder::new(dim, seed),
        };
        Ok(Self { image, audio, text })
    }

    pub fn dim(&self) -> usize {
        self.image.dim()
    }
}

pub fn encode_image(img: &CanvasImage, seed: u64) -> Result<Embedding> {
    ImageEncoder::new(DEFAULT_DIM, seed).encode(img)
}

pub fn encode_audio(feats: &FeatureStack, seed: u64) -> Result<Embedding> {
    AudioEncoder::new(DEFAULT_DIM, seed).encode(feats)
}

pub fn encode_text(text: &str, seed: u64) -> Result<Embedding> {
    TextEncoder::new(DEFAULT_DIM, seed).encode(text)
}
