//! Mono WAV I/O: PCM 16-bit signed LE and IEEE float32. PCM16 reads map to
//! [-1,1] by division by 32768.

use std::path::Path;

use super::Waveform;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleFormat {
    Pcm16,
    Float32,
}

pub fn read_wav(path: &Path) -> Result<Waveform> {
    let reader = hound::WavReader::open(path)
        .map_err(|e| Error::Wav(format!("{}: {e}", path.display())))?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::Wav(format!(
            "{}: expected mono, got {} channels",
            path.display(),
            spec.channels
        )));
    }
    let samples: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Wav(e.to_string()))?,
        (hound::SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Wav(e.to_string()))?,
        (f, b) => {
            return Err(Error::Wav(format!(
                "{}: unsupported format {f:?}/{b} bits (PCM16 or float32 only)",
                path.display()
            )))
        }
    };
    Ok(Waveform::new(samples, spec.sample_rate))
}

pub fn write_wav(path: &Path, w: &Waveform, format: SampleFormat) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: w.sample_rate,
        bits_per_sample: match format {
            SampleFormat::Pcm16 => 16,
            SampleFormat::Float32 => 32,
        },
        sample_format: match format {
            SampleFormat::Pcm16 => hound::SampleFormat::Int,
            SampleFormat::Float32 => hound::SampleFormat::Float,
        },
    };
    let mut writer = hound::WavWriter::create(path, spec)
        .map_err(|e| Error::Wav(format!("{}: {e}", path.display())))?;
    match format {
        SampleFormat::Pcm16 => {
            for &x in &w.samples {
                let v = (x.clamp(-1.0, 1.0) * 32767.0).round() as i16;
                writer.write_sample(v).map_err(|e| Error::Wav(e.to_string()))?;
            }
        }
        SampleFormat::Float32 => {
            for &x in &w.samples {
                writer
                    .write_sample(x as f32)
                    .map_err(|e| Error::Wav(e.to_string()))?;
            }
        }
    }
    writer.finalize().map_err(|e| Error::Wav(e.to_string()))?;
    Ok(())
}
