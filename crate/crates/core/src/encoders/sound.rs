use super::{mat_vec, seeded_gaussian, Embedding, TanhNormalize, WeightFile};
use crate::audio::{FeatureStack, MEL_FLOOR, N_CHROMA, N_MELS};
use crate::error::{Error, Result};

/// Mean and standard deviation of every mel band and chroma class.
pub const AUDIO_POOLED_DIM: usize = 2 * (N_MELS + N_CHROMA);
const DOMAIN: u64 = 0x50a0_d5ee_d000_0002;

pub(super) const PROJ_TENSOR: &str = "audio_proj";

pub(crate) fn mean_std(rows: &[Vec<f64>], col: usize) -> (f64, f64) {
    let n = rows.len() as f64;
    let mean = rows.iter().map(|r| r[col]).sum::<f64>() / n;
    let var = rows.iter().map(|r| (r[col] - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Pooled audio descriptor, ordered `[mel mean (64), mel std (64),
/// chroma mean (12), chroma std (12)]`. Mel statistics are divided by
/// `-ln(1e-10)` so the silence floor maps to -1.
pub fn pool_audio_features(feats: &FeatureStack) -> Result<Vec<f64>> {
    feats.validate()?;
    let mel_scale = -MEL_FLOOR.ln();
    let mut out = Vec::with_capacity(AUDIO_POOLED_DIM);
    let mel: Vec<(f64, f64)> = (0..N_MELS).map(|b| mean_std(&feats.mel, b)).collect();
    out.extend(mel.iter().map(|(m, _)| m / mel_scale));
    out.extend(mel.iter().map(|(_, s)| s / mel_scale));
    let chroma: Vec<(f64, f64)> = (0..N_CHROMA).map(|b| mean_std(&feats.chroma, b)).collect();
    out.extend(chroma.iter().map(|(m, _)| *m));
    out.extend(chroma.iter().map(|(_, s)| *s));
    Ok(out)
}

/// Reference audio encoder: pooled statistics, random projection, `tanh`,
/// L2 normalization.
#[derive(Clone, Debug)]
pub struct AudioEncoder {
    dim: usize,
    proj: Vec<f64>,
}

impl AudioEncoder {
    pub fn new(dim: usize, seed: u64) -> Self {
        let scale = 1.0 / (AUDIO_POOLED_DIM as f64).sqrt();
        Self {
            dim,
            proj: seeded_gaussian(seed, DOMAIN, dim, AUDIO_POOLED_DIM, scale),
        }
    }

    /// Loads `audio_proj [dim x 152]`.
    pub fn from_weights(w: &WeightFile, dim: usize) -> Result<Self> {
        Ok(Self {
            dim,
            proj: w.expect(PROJ_TENSOR, &[dim, AUDIO_POOLED_DIM])?.to_f64(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn encode(&self, feats: &FeatureStack) -> Result<Embedding> {
        if feats.n_frames == 0 {
            return Err(Error::param("cannot encode an empty feature stack"));
        }
        let pooled = pool_audio_features(feats)?;
        let mut h = vec![0.0; self.dim];
        mat_vec(&self.proj, &pooled, &mut h);
        Ok(TanhNormalize::forward(&h)?.0)
    }
}
