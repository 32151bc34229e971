use std::path::Path;

use super::{AudioClip, SAMPLE_RATE_HZ};
use crate::error::{Error, Result};

fn map_hound(path: &Path, e: hound::Error) -> Error {
    match e {
        // hound reports short reads as `Other`
        hound::Error::IoError(io)
            if matches!(
                io.kind(),
                std::io::ErrorKind::UnexpectedEof | std::io::ErrorKind::Other
            ) =>
        {
            Error::format(format!("{}: truncated wav data", path.display()))
        }
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::format(format!("{}: {other}", path.display())),
    }
}

/// Reads a PCM16 or float32 WAV file, averages channels to mono and
/// resamples linearly to 16 kHz.
pub fn decode_wav(path: impl AsRef<Path>) -> Result<AudioClip> {
    let path = path.as_ref();
    // Open the file ourselves so a missing file surfaces as an I/O error.
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader =
        hound::WavReader::new(std::io::BufReader::new(file)).map_err(|e| map_hound(path, e))?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if !(1..=2).contains(&channels) {
        return Err(Error::format(format!(
            "{}: {channels} channels, expected mono or stereo",
            path.display()
        )));
    }
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| map_hound(path, e))?,
        (hound::SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| map_hound(path, e))?,
        (fmt, bits) => {
            return Err(Error::format(format!(
                "{}: unsupported encoding {fmt:?} {bits}-bit",
                path.display()
            )))
        }
    };
    if interleaved.len() < channels {
        return Err(Error::format(format!("{}: empty data chunk", path.display())));
    }
    let mono: Vec<f64> = interleaved
        .chunks_exact(channels)
        .map(|frame| frame.iter().sum::<f64>() / channels as f64)
        .collect();
    AudioClip::new(resample_linear(&mono, spec.sample_rate), SAMPLE_RATE_HZ)
}

/// Linear-interpolation resampling to 16 kHz. Output sample `k` sits at time
/// `k / 16000`; positions past the last input sample hold its value.
pub fn resample_linear(samples: &[f64], rate_hz: u32) -> Vec<f64> {
    if rate_hz == SAMPLE_RATE_HZ || samples.is_empty() {
        return samples.to_vec();
    }
    let n = samples.len();
    let ratio = rate_hz as f64 / SAMPLE_RATE_HZ as f64;
    let out_len = ((n as f64 / ratio).round() as usize).max(1);
    (0..out_len)
        .map(|k| {
            let pos = k as f64 * ratio;
            let i = pos.floor() as usize;
            if i + 1 >= n {
                samples[n - 1]
            } else {
                let f = pos - i as f64;
                samples[i] + f * (samples[i + 1] - samples[i])
            }
        })
        .collect()
}

/// Writes a mono PCM16 file at the clip's sample rate.
pub fn write_wav_pcm16(path: impl AsRef<Path>, samples: &[f64], rate_hz: u32) -> Result<()> {
    let path = path.as_ref();
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: rate_hz,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(path, spec).map_err(|e| map_hound(path, e))?;
    for &s in samples {
        let v = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        w.write_sample(v).map_err(|e| map_hound(path, e))?;
    }
    w.finalize().map_err(|e| map_hound(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn write<T: hound::Sample + Copy>(
        path: &Path,
        channels: u16,
        rate: u32,
        bits: u16,
        fmt: hound::SampleFormat,
        data: &[T],
    ) {
        let spec = hound::WavSpec {
            channels,
            sample_rate: rate,
            bits_per_sample: bits,
            sample_format: fmt,
        };
        let mut w = hound::WavWriter::create(path, spec).unwrap();
        for &s in data {
            w.write_sample(s).unwrap();
        }
        w.finalize().unwrap();
    }

    #[test]
    fn pcm16_scaling() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.wav");
        write(&p, 1, 16000, 16, hound::SampleFormat::Int, &[16384i16, -16384]);
        let clip = decode_wav(&p).unwrap();
        assert_eq!(clip.samples(), &[0.5, -0.5]);
    }

    #[test]
    fn stereo_downmix_is_mean() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.wav");
        write(&p, 2, 16000, 32, hound::SampleFormat::Float, &[1.0f32, 0.0]);
        let clip = decode_wav(&p).unwrap();
        assert_eq!(clip.samples(), &[0.5]);
    }

    #[test]
    fn resampling_8k_sine() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.wav");
        let n = 8000;
        let data: Vec<f32> = (0..n)
            .map(|k| (2.0 * PI * 4.0 * k as f64 / 8000.0).sin() as f32)
            .collect();
        write(&p, 1, 8000, 32, hound::SampleFormat::Float, &data);
        let clip = decode_wav(&p).unwrap();
        assert_eq!(clip.samples().len(), 2 * n);
        let max_err = clip
            .samples()
            .iter()
            .enumerate()
            .map(|(k, v)| (v - (2.0 * PI * 4.0 * k as f64 / 16000.0).sin()).abs())
            .fold(0.0, f64::max);
        assert!(max_err < 0.01, "{max_err}");
    }

    #[test]
    fn unsupported_and_empty_files() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("u8.wav");
        write(&p, 1, 16000, 8, hound::SampleFormat::Int, &[3i8, 4]);
        assert!(matches!(decode_wav(&p), Err(Error::Format(_))));

        let p = dir.path().join("empty.wav");
        write::<i16>(&p, 1, 16000, 16, hound::SampleFormat::Int, &[]);
        assert!(matches!(decode_wav(&p), Err(Error::Format(_))));

        let p = dir.path().join("three.wav");
        write(&p, 3, 16000, 16, hound::SampleFormat::Int, &[1i16, 2, 3]);
        assert!(matches!(decode_wav(&p), Err(Error::Format(_))));

        let p = dir.path().join("junk.wav");
        std::fs::write(&p, b"RIFF\x00\x00").unwrap();
        assert!(matches!(decode_wav(&p), Err(Error::Format(_))));
    }

    #[test]
    fn missing_file_is_io() {
        assert!(matches!(
            decode_wav("/nonexistent/x.wav"),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn pcm16_writer_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("w.wav");
        write_wav_pcm16(&p, &[0.25, -0.5, 0.0], 16000).unwrap();
        assert_eq!(decode_wav(&p).unwrap().samples(), &[0.25, -0.5, 0.0]);
    }
}
