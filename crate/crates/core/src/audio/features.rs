use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::{
    AudioClip, FRAME_HOP, FRAME_LENGTH, MEL_FLOOR, N_BINS, N_CHROMA, N_MELS, N_MFCC,
    SAMPLE_RATE_HZ,
};
use crate::error::{Error, Result};

/// Per-frame features sharing one frame grid (1024-sample Hann window, hop 256).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureStack {
    /// `[n_frames][64]` natural-log mel energies.
    pub mel: Vec<Vec<f64>>,
    /// `[n_frames][20]`
    pub mfcc: Vec<Vec<f64>>,
    /// `[n_frames][12]`, class 0 is A.
    pub chroma: Vec<Vec<f64>>,
    pub n_frames: usize,
}

impl FeatureStack {
    pub fn frame_hop_samples(&self) -> usize {
        FRAME_HOP
    }

    pub fn frame_length_samples(&self) -> usize {
        FRAME_LENGTH
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_frames == 0 {
            return Err(Error::param("feature stack has no frames"));
        }
        let shapes_ok = self.mel.len() == self.n_frames
            && self.mfcc.len() == self.n_frames
            && self.chroma.len() == self.n_frames
            && self.mel.iter().all(|r| r.len() == N_MELS)
            && self.mfcc.iter().all(|r| r.len() == N_MFCC)
            && self.chroma.iter().all(|r| r.len() == N_CHROMA);
        if !shapes_ok {
            return Err(Error::param("feature stack matrices have inconsistent shapes"));
        }
        Ok(())
    }
}

/// Number of analysis frames for a clip of `len` samples.
///
/// Frames start at multiples of the hop and every frame lies fully inside the
/// clip: `floor((len - 1024) / 256) + 1`. Clips shorter than one window have
/// no frames.
pub fn frame_count(len: usize) -> usize {
    if len < FRAME_LENGTH {
        0
    } else {
        (len - FRAME_LENGTH) / FRAME_HOP + 1
    }
}

/// Periodic Hann window.
pub fn hann_window(n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| 0.5 - 0.5 * (2.0 * PI * k as f64 / n as f64).cos())
        .collect()
}

/// One-sided STFT magnitudes, `[n_frames][513]`.
pub fn stft_magnitude(clip: &AudioClip) -> Result<Vec<Vec<f64>>> {
    let x = clip.samples();
    if x.len() < FRAME_LENGTH {
        return Err(Error::param(format!(
            "clip has {} samples, at least {FRAME_LENGTH} are needed",
            x.len()
        )));
    }
    let window = hann_window(FRAME_LENGTH);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(FRAME_LENGTH);
    let mut buf = vec![Complex::new(0.0, 0.0); FRAME_LENGTH];
    let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let frames = (0..frame_count(x.len()))
        .map(|f| {
            let start = f * FRAME_HOP;
            for (k, b) in buf.iter_mut().enumerate() {
                *b = Complex::new(x[start + k] * window[k], 0.0);
            }
            fft.process_with_scratch(&mut buf, &mut scratch);
            buf[..N_BINS].iter().map(|c| c.norm()).collect()
        })
        .collect();
    Ok(frames)
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

fn bin_hz(bin: usize) -> f64 {
    bin as f64 * SAMPLE_RATE_HZ as f64 / FRAME_LENGTH as f64
}

/// Triangular HTK-mel filters, `[64][513]`, peak weight 1, spanning 0..8000 Hz.
pub fn mel_filterbank() -> Vec<Vec<f64>> {
    let top = hz_to_mel(SAMPLE_RATE_HZ as f64 / 2.0);
    let edges: Vec<f64> = (0..N_MELS + 2)
        .map(|k| mel_to_hz(top * k as f64 / (N_MELS + 1) as f64))
        .collect();
    (0..N_MELS)
        .map(|m| {
            let (lo, center, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            (0..N_BINS)
                .map(|b| {
                    let f = bin_hz(b);
                    if f <= lo || f >= hi {
                        0.0
                    } else if f <= center {
                        (f - lo) / (center - lo)
                    } else {
                        (hi - f) / (hi - center)
                    }
                })
                .collect()
        })
        .collect()
}

/// Log mel energies of the power spectrum with a floor of `1e-10`.
pub fn mel_spectrogram(stft: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let bank = mel_filterbank();
    stft.iter()
        .map(|frame| {
            assert_eq!(frame.len(), N_BINS, "expected {N_BINS} STFT bins");
            bank.iter()
                .map(|filter| {
                    let e: f64 = filter
                        .iter()
                        .zip(frame)
                        .map(|(w, m)| w * m * m)
                        .sum();
                    e.max(MEL_FLOOR).ln()
                })
                .collect()
        })
        .collect()
}

/// Orthonormal DCT-II matrix `[n][n]`; row `k` is basis function `k`.
pub fn dct_matrix(n: usize) -> Vec<Vec<f64>> {
    let nf = n as f64;
    (0..n)
        .map(|k| {
            let scale = if k == 0 { (1.0 / nf).sqrt() } else { (2.0 / nf).sqrt() };
            (0..n)
                .map(|i| scale * (PI * k as f64 * (i as f64 + 0.5) / nf).cos())
                .collect()
        })
        .collect()
}

/// First 20 orthonormal DCT-II coefficients of each log-mel frame.
pub fn mfcc(mel: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let dct = dct_matrix(N_MELS);
    mel.iter()
        .map(|frame| {
            assert_eq!(frame.len(), N_MELS, "expected {N_MELS} mel bands");
            dct[..N_MFCC]
                .iter()
                .map(|row| row.iter().zip(frame).map(|(a, b)| a * b).sum())
                .collect()
        })
        .collect()
}

/// Pitch class of a frequency relative to A440, or `None` below 32 Hz.
pub fn pitch_class(hz: f64) -> Option<usize> {
    if hz < 32.0 {
        return None;
    }
    let semis = (12.0 * (hz / 440.0).log2()).round() as i64;
    Some(semis.rem_euclid(12) as usize)
}

/// Power folded into 12 pitch classes per frame, L1-normalized. Silent
/// frames stay all-zero.
pub fn chromagram(stft: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let classes: Vec<Option<usize>> = (0..N_BINS).map(|b| pitch_class(bin_hz(b))).collect();
    stft.iter()
        .map(|frame| {
            assert_eq!(frame.len(), N_BINS, "expected {N_BINS} STFT bins");
            let mut row = vec![0.0; N_CHROMA];
            for (m, pc) in frame.iter().zip(&classes) {
                if let Some(pc) = pc {
                    row[*pc] += m * m;
                }
            }
            let total: f64 = row.iter().sum();
            if total > 0.0 {
                for v in &mut row {
                    *v /= total;
                }
            }
            row
        })
        .collect()
}

pub fn extract_features(clip: &AudioClip) -> Result<FeatureStack> {
    let stft = stft_magnitude(clip)?;
    let mel = mel_spectrogram(&stft);
    let mfcc = mfcc(&mel);
    let chroma = chromagram(&stft);
    Ok(FeatureStack {
        n_frames: stft.len(),
        mel,
        mfcc,
        chroma,
    })
}
