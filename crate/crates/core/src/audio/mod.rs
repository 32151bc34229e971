//! WAV decoding and the speech feature pipeline: STFT, log-mel spectrogram,
//! MFCC and chromagram on a shared frame grid.

mod features;
mod wav;

pub use features::{
    chromagram, dct_matrix, extract_features, frame_count, mel_filterbank, mel_spectrogram, mfcc,
    stft_magnitude, hann_window, hz_to_mel, mel_to_hz, pitch_class, FeatureStack,
};
pub use wav::{decode_wav, resample_linear, write_wav_pcm16};

use crate::error::{Error, Result};

pub const SAMPLE_RATE_HZ: u32 = 16_000;
pub const FRAME_LENGTH: usize = 1024;
pub const FRAME_HOP: usize = 256;
pub const N_BINS: usize = FRAME_LENGTH / 2 + 1;
pub const N_MELS: usize = 64;
pub const N_MFCC: usize = 20;
pub const N_CHROMA: usize = 12;
pub const MEL_FLOOR: f64 = 1e-10;

/// Mono audio at 16 kHz.
#[derive(Clone, Debug, PartialEq)]
pub struct AudioClip {
    samples: Vec<f64>,
    sample_rate_hz: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate_hz: u32) -> Result<Self> {
        if sample_rate_hz != SAMPLE_RATE_HZ {
            return Err(Error::param(format!(
                "clips are canonicalized to {SAMPLE_RATE_HZ} Hz, got {sample_rate_hz}"
            )));
        }
        if samples.is_empty() {
            return Err(Error::param("audio clip has no samples"));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::param("audio clip contains non-finite samples"));
        }
        Ok(Self {
            samples,
            sample_rate_hz,
        })
    }

    pub fn from_fn(len: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        let rate = SAMPLE_RATE_HZ as f64;
        Self::new((0..len).map(|k| f(k as f64 / rate)).collect(), SAMPLE_RATE_HZ)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz as f64
    }
}
