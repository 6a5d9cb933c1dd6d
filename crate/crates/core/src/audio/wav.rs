//! PCM WAV reading and writing. Multi-channel input is averaged to mono and
//! integer formats are rescaled to [-1, 1]; the writer emits 16-bit mono.

use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::AudioClip;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Load a PCM WAV file as a mono clip with samples in [-1, 1].
pub fn load_wav<S: Scalar>(path: impl AsRef<Path>) -> Result<AudioClip<S>> {
    let path = path.as_ref();
    let reader = WavReader::open(path).map_err(|e| wav_err(path, e))?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if channels == 0 {
        return Err(Error::Wav {
            path: path.into(),
            detail: "zero channels".into(),
        });
    }

    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, bits) if bits <= 32 => {
            let scale = (1u64 << (bits - 1)) as f64;
            reader
                .into_samples::<i32>()
                .map(|s| s.map(|v| v as f64 / scale))
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| wav_err(path, e))?
        }
        (SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| wav_err(path, e))?,
        (fmt, bits) => {
            return Err(Error::Wav {
                path: path.into(),
                detail: format!("unsupported encoding: {fmt:?} {bits}-bit"),
            })
        }
    };

    if interleaved.is_empty() {
        return Err(Error::Wav {
            path: path.into(),
            detail: "zero-length audio".into(),
        });
    }

    let frames = interleaved.len() / channels;
    let inv = 1.0 / channels as f64;
    let mono: Vec<S> = (0..frames)
        .map(|f| {
            let sum: f64 = interleaved[f * channels..(f + 1) * channels].iter().sum();
            S::of_f64(sum * inv)
        })
        .collect();

    AudioClip::new(mono, spec.sample_rate)
}

/// Write a clip as 16-bit mono PCM. Samples are clamped to [-1, 1].
pub fn save_wav<S: Scalar>(clip: &AudioClip<S>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let spec = WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate,
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let mut writer = WavWriter::create(path, spec).map_err(|e| wav_err(path, e))?;
    for &s in &clip.samples {
        let v = (s.as_f64().clamp(-1.0, 1.0) * 32767.0).round() as i16;
        writer.write_sample(v).map_err(|e| wav_err(path, e))?;
    }
    writer.finalize().map_err(|e| wav_err(path, e))?;
    Ok(())
}

fn wav_err(path: &Path, e: hound::Error) -> Error {
    Error::Wav {
        path: path.into(),
        detail: e.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_raw(path: &Path, spec: WavSpec, samples: &[i16]) {
        let mut w = WavWriter::create(path, spec).unwrap();
        for &s in samples {
            w.write_sample(s).unwrap();
        }
        w.finalize().unwrap();
    }

    #[test]
    fn constant_16bit_scales_to_half() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("const.wav");
        let spec = WavSpec {
            channels: 1,
            sample_rate: 16_000,
            bits_per_sample: 16,
            sample_format: SampleFormat::Int,
        };
        write_raw(&path, spec, &[16_384i16; 256]);
        let clip: AudioClip<f64> = load_wav(&path).unwrap();
        assert_eq!(clip.sample_rate, 16_000);
        for &s in &clip.samples {
            assert!((s - 0.5).abs() <= 1.0 / 32_768.0);
        }
    }

    #[test]
    fn stereo_averages_to_zero() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("stereo.wav");
        let spec = WavSpec {
            channels: 2,
            sample_rate: 8_000,
            bits_per_sample: 16,
            sample_format: SampleFormat::Int,
        };
        let interleaved: Vec<i16> = (0..128)
            .flat_map(|_| [16_384i16, -16_384i16])
            .collect();
        write_raw(&path, spec, &interleaved);
        let clip: AudioClip<f64> = load_wav(&path).unwrap();
        assert_eq!(clip.len(), 128);
        for &s in &clip.samples {
            assert!(s.abs() < 1e-12);
        }
    }

    #[test]
    fn missing_file_errors() {
        assert!(load_wav::<f64>("/nonexistent/nope.wav").is_err());
    }

    #[test]
    fn round_trip_is_close() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rt.wav");
        let samples: Vec<f64> = (0..2048)
            .map(|i| 0.4 * (2.0 * std::f64::consts::PI * 440.0 * i as f64 / 16_000.0).sin())
            .collect();
        let clip = AudioClip::new(samples, 16_000).unwrap();
        save_wav(&clip, &path).unwrap();
        let back: AudioClip<f64> = load_wav(&path).unwrap();
        assert_eq!(back.len(), clip.len());
        for (a, b) in clip.samples.iter().zip(back.samples.iter()) {
            assert!((a - b).abs() < 1.0 / 16_384.0);
        }
    }
}
