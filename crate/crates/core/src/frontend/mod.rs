//! Audio front end: framing, Hamming window, power spectrum, mel filterbank and log compression.

mod fft;
mod mel;
pub mod mels;
pub mod wav;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub use fft::{fft_power_spectrum, Fft};
pub use mel::{build_mel_filterbank, hz_to_mel, mel_to_hz, MelFilterbank};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrontendConfig {
    pub sample_rate: u32,
    pub window_ms: f64,
    pub hop_ms: f64,
    pub fft_size: usize,
    pub num_mels: usize,
    pub num_frames: usize,
    pub fmin: f64,
    pub fmax: f64,
    pub log_epsilon: f64,
}

impl Default for FrontendConfig {
    /// 16 kHz, 32 ms Hamming window (512 samples), 10 ms hop, 64 mels, 400 frames.
    fn default() -> Self {
        FrontendConfig {
            sample_rate: 16_000,
            window_ms: 32.0,
            hop_ms: 10.0,
            fft_size: 512,
            num_mels: 64,
            num_frames: 400,
            fmin: 0.0,
            fmax: 8_000.0,
            log_epsilon: 1e-6,
        }
    }
}

impl FrontendConfig {
    /// Default geometry at another sample rate; the FFT grows to the next power of two.
    pub fn for_sample_rate(sample_rate: u32) -> Self {
        let mut cfg = FrontendConfig {
            sample_rate,
            fmax: sample_rate as f64 / 2.0,
            ..FrontendConfig::default()
        };
        cfg.fft_size = cfg.window_samples().max(1).next_power_of_two();
        cfg
    }

    pub fn window_samples(&self) -> usize {
        (self.window_ms * self.sample_rate as f64 / 1000.0).round() as usize
    }

    pub fn hop_samples(&self) -> usize {
        (self.hop_ms * self.sample_rate as f64 / 1000.0).round() as usize
    }

    pub fn analysis_span_ms(&self) -> f64 {
        self.num_frames as f64 * self.hop_ms
    }

    /// Samples consumed by one analysis span (`num_frames` hops).
    ///
    /// The trailing frames that reach past the span are zero-padded, so exactly
    /// 4 s of audio yields the full 400 frames at the default settings.
    pub fn required_samples(&self) -> usize {
        self.num_frames * self.hop_samples()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(format!("frontend config: {msg}")));
        if self.sample_rate == 0 {
            return bad("sample rate must be positive".into());
        }
        if !(self.window_ms.is_finite() && self.hop_ms.is_finite()) {
            return bad("window and hop must be finite".into());
        }
        if self.window_samples() < 2 {
            return bad(format!(
                "window of {} samples is too short",
                self.window_samples()
            ));
        }
        if self.hop_samples() == 0 {
            return bad("hop must cover at least one sample".into());
        }
        if !self.fft_size.is_power_of_two() {
            return Err(Error::Unsupported(format!(
                "FFT size {} is not a power of two",
                self.fft_size
            )));
        }
        if self.window_samples() > self.fft_size {
            return bad(format!(
                "window of {} samples exceeds FFT size {}",
                self.window_samples(),
                self.fft_size
            ));
        }
        if self.num_mels == 0 || self.num_frames == 0 {
            return bad("num_mels and num_frames must be positive".into());
        }
        let nyquist = self.sample_rate as f64 / 2.0;
        if !(self.fmin >= 0.0 && self.fmin < self.fmax && self.fmax <= nyquist) {
            return bad(format!(
                "need 0 <= fmin < fmax <= {nyquist}, got fmin={} fmax={}",
                self.fmin, self.fmax
            ));
        }
        if !(self.log_epsilon.is_finite() && self.log_epsilon > 0.0) {
            return bad(format!(
                "log_epsilon must be positive, got {}",
                self.log_epsilon
            ));
        }
        Ok(())
    }
}

/// Symmetric Hamming window `0.54 - 0.46 cos(2 pi k / (n - 1))`.
pub fn hamming_window(n: usize) -> Result<Vec<f32>> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "Hamming window needs n >= 2, got {n}"
        )));
    }
    let denom = (n - 1) as f64;
    Ok((0..n)
        .map(|k| (0.54 - 0.46 * (2.0 * PI * k as f64 / denom).cos()) as f32)
        .collect())
}

/// A configured front end with its window, FFT plan and filterbank precomputed.
#[derive(Clone, Debug)]
pub struct Frontend {
    cfg: FrontendConfig,
    window: Vec<f32>,
    fft: Fft,
    filterbank: MelFilterbank,
}

impl Frontend {
    pub fn new(cfg: FrontendConfig) -> Result<Self> {
        cfg.validate()?;
        let window = hamming_window(cfg.window_samples())?;
        let fft = Fft::new(cfg.fft_size)?;
        let filterbank = build_mel_filterbank(&cfg)?;
        Ok(Frontend {
            cfg,
            window,
            fft,
            filterbank,
        })
    }

    pub fn config(&self) -> &FrontendConfig {
        &self.cfg
    }

    pub fn filterbank(&self) -> &MelFilterbank {
        &self.filterbank
    }

    /// Log-mel spectrogram of the first analysis span of `samples`:
    /// a `num_frames x num_mels x 1` tensor.
    pub fn process(&self, samples: &[f32]) -> Result<Tensor> {
        let required = self.cfg.required_samples();
        if samples.len() < required {
            return Err(Error::InsufficientAudio {
                required,
                actual: samples.len(),
                seconds: required as f64 / self.cfg.sample_rate as f64,
            });
        }
        let span = &samples[..required];
        let hop = self.cfg.hop_samples();
        let eps = self.cfg.log_epsilon;
        let mut frame = vec![0.0f32; self.cfg.fft_size];
        let mut out = Vec::with_capacity(self.cfg.num_frames * self.cfg.num_mels);
        for t in 0..self.cfg.num_frames {
            frame.fill(0.0);
            let start = t * hop;
            let end = (start + self.window.len()).min(span.len());
            for ((dst, &s), &w) in frame.iter_mut().zip(&span[start..end]).zip(&self.window) {
                *dst = s * w;
            }
            let power = self.fft.power_spectrum(&frame);
            out.extend(
                self.filterbank
                    .apply(&power)
                    .into_iter()
                    .map(|e| (e as f64 + eps).ln() as f32),
            );
        }
        Tensor::new(self.cfg.num_frames, self.cfg.num_mels, 1, out)
    }
}

pub fn log_mel_spectrogram(samples: &[f32], cfg: &FrontendConfig) -> Result<Tensor> {
    Frontend::new(cfg.clone())?.process(samples)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hamming_endpoints_and_center() {
        let w = hamming_window(2).unwrap();
        assert!((w[0] - 0.08).abs() < 1e-7 && (w[1] - 0.08).abs() < 1e-7);
        let w = hamming_window(101).unwrap();
        assert!((w[50] - 1.0).abs() < 1e-7);
        assert!(hamming_window(1).is_err());
    }

    #[test]
    fn hamming_symmetric() {
        let w = hamming_window(512).unwrap();
        for k in 0..512 {
            assert_eq!(w[k], w[511 - k], "k={k}");
        }
    }

    #[test]
    fn default_geometry() {
        let cfg = FrontendConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.window_samples(), 512);
        assert_eq!(cfg.hop_samples(), 160);
        assert_eq!(cfg.analysis_span_ms(), 4000.0);
        assert_eq!(cfg.required_samples(), 64_000);
    }

    #[test]
    fn other_rates_pad_to_power_of_two() {
        let cfg = FrontendConfig::for_sample_rate(44_100);
        cfg.validate().unwrap();
        assert_eq!(cfg.window_samples(), 1411);
        assert_eq!(cfg.fft_size, 2048);
        assert_eq!(cfg.fmax, 22_050.0);
    }

    #[test]
    fn invalid_configs() {
        let base = FrontendConfig::default();
        let cases = [
            FrontendConfig {
                fft_size: 500,
                ..base.clone()
            },
            FrontendConfig {
                fft_size: 256,
                ..base.clone()
            },
            FrontendConfig {
                fmax: 9000.0,
                ..base.clone()
            },
            FrontendConfig {
                fmin: 8000.0,
                ..base.clone()
            },
            FrontendConfig {
                log_epsilon: 0.0,
                ..base.clone()
            },
            FrontendConfig {
                num_mels: 0,
                ..base.clone()
            },
        ];
        for cfg in cases {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
    }

    #[test]
    fn silence_hits_the_log_floor() {
        let cfg = FrontendConfig::default();
        let t = log_mel_spectrogram(&vec![0.0; 64_000], &cfg).unwrap();
        let floor = (1e-6f64).ln() as f32;
        assert!(t.data().iter().all(|&v| v == floor));
    }

    #[test]
    fn short_audio_reports_minimum() {
        let err = log_mel_spectrogram(&vec![0.0; 63_999], &FrontendConfig::default()).unwrap_err();
        match err {
            Error::InsufficientAudio {
                required, actual, ..
            } => {
                assert_eq!((required, actual), (64_000, 63_999));
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
