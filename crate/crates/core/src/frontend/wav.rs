//! WAV ingestion (PCM16 and float32), downmixed to mono.

use std::path::Path;

use hound::{SampleFormat, WavReader};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct MonoAudio {
    pub sample_rate: u32,
    pub samples: Vec<f32>,
}

impl MonoAudio {
    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

fn map_hound(path: &Path, err: hound::Error) -> Error {
    match err {
        hound::Error::IoError(e) => Error::io(path, e),
        other => Error::Audio(format!("{}: {other}", path.display())),
    }
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<MonoAudio> {
    let path = path.as_ref();
    let reader = WavReader::open(path).map_err(|e| map_hound(path, e))?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if channels == 0 {
        return Err(Error::Audio(format!("{}: zero channels", path.display())));
    }
    let interleaved: Vec<f32> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f32 / 32_768.0))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| map_hound(path, e))?,
        (SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| map_hound(path, e))?,
        (fmt, bits) => {
            return Err(Error::Audio(format!(
                "{}: unsupported sample format {fmt:?}/{bits} bit (need PCM16 or float32)",
                path.display()
            )))
        }
    };
    Ok(MonoAudio {
        sample_rate: spec.sample_rate,
        samples: downmix(&interleaved, channels),
    })
}

/// Averages interleaved channels into one.
pub fn downmix(interleaved: &[f32], channels: usize) -> Vec<f32> {
    if channels == 1 {
        return interleaved.to_vec();
    }
    interleaved
        .chunks_exact(channels)
        .map(|frame| frame.iter().sum::<f32>() / channels as f32)
        .collect()
}
