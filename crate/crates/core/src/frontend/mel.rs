use crate::error::{Error, Result};

use super::FrontendConfig;

/// HTK mel scale.
pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular mel filters over the one-sided FFT bins, each peak-normalized to 1.0.
#[derive(Clone, Debug, PartialEq)]
pub struct MelFilterbank {
    num_mels: usize,
    num_bins: usize,
    weights: Vec<f32>,
    /// Non-zero bin range `[start, end)` per filter.
    support: Vec<(usize, usize)>,
    centers_hz: Vec<f64>,
}

impl MelFilterbank {
    pub fn num_mels(&self) -> usize {
        self.num_mels
    }

    pub fn num_bins(&self) -> usize {
        self.num_bins
    }

    pub fn row(&self, m: usize) -> &[f32] {
        &self.weights[m * self.num_bins..(m + 1) * self.num_bins]
    }

    pub fn centers_hz(&self) -> &[f64] {
        &self.centers_hz
    }

    pub fn nonzeros(&self) -> usize {
        self.weights.iter().filter(|&&w| w > 0.0).count()
    }

    /// Mel energies of a power spectrum; bins are summed in ascending order.
    pub fn apply(&self, power: &[f32]) -> Vec<f32> {
        assert_eq!(power.len(), self.num_bins, "power spectrum length");
        (0..self.num_mels)
            .map(|m| {
                let (start, end) = self.support[m];
                let row = self.row(m);
                let mut acc = 0.0f32;
                for k in start..end {
                    acc += row[k] * power[k];
                }
                acc
            })
            .collect()
    }
}

pub fn build_mel_filterbank(cfg: &FrontendConfig) -> Result<MelFilterbank> {
    cfg.validate()?;
    let num_mels = cfg.num_mels;
    let num_bins = cfg.fft_size / 2 + 1;
    let mel_lo = hz_to_mel(cfg.fmin);
    let mel_hi = hz_to_mel(cfg.fmax);
    let step = (mel_hi - mel_lo) / (num_mels + 1) as f64;
    let edges: Vec<f64> = (0..num_mels + 2)
        .map(|i| mel_to_hz(mel_lo + step * i as f64))
        .collect();
    let bin_hz = cfg.sample_rate as f64 / cfg.fft_size as f64;

    let mut weights = vec![0.0f32; num_mels * num_bins];
    let mut support = Vec::with_capacity(num_mels);
    for m in 0..num_mels {
        let (left, center, right) = (edges[m], edges[m + 1], edges[m + 2]);
        let row: Vec<f64> = (0..num_bins)
            .map(|k| {
                let f = k as f64 * bin_hz;
                let rising = (f - left) / (center - left);
                let falling = (right - f) / (right - center);
                rising.min(falling).max(0.0)
            })
            .collect();
        let peak = row.iter().copied().fold(0.0f64, f64::max);
        if peak <= 0.0 {
            return Err(Error::DegenerateFilterbank(format!(
                "filter {m} ({left:.2}-{right:.2} Hz) contains no FFT bin at {bin_hz:.2} Hz resolution; \
                 use fewer mels or a larger FFT"
            )));
        }
        let dst = &mut weights[m * num_bins..(m + 1) * num_bins];
        for (d, v) in dst.iter_mut().zip(&row) {
            *d = (v / peak) as f32;
        }
        let start = dst.iter().position(|&w| w > 0.0).unwrap_or(0);
        let end = dst.iter().rposition(|&w| w > 0.0).map_or(0, |i| i + 1);
        support.push((start, end));
    }

    Ok(MelFilterbank {
        num_mels,
        num_bins,
        weights,
        support,
        centers_hz: edges[1..=num_mels].to_vec(),
    })
}
