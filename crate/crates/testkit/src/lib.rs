//! Brute-force reference implementations and audio fixtures.
//!
//! Nothing here calls into `aedcnn-core`: the oracles work on plain slices and
//! accumulate in `f64` so they can check the optimized kernels independently.

use std::f64::consts::PI;
use std::path::Path;

/// Direct same-padded convolution.
///
/// `input` is `(h, w, c)` row-major, `weights` is `(oc, kh, kw, c)`.
/// Returns `(outputs, scales, out_h, out_w)` where `scales[i]` is
/// `sum |w * x| + |bias|` for output `i`, the natural magnitude for a
/// relative error bound.
#[allow(clippy::too_many_arguments)]
pub fn naive_conv2d(
    input: &[f32],
    (h, w, c): (usize, usize, usize),
    weights: &[f32],
    bias: &[f32],
    (kh, kw, oc): (usize, usize, usize),
    stride: usize,
) -> (Vec<f64>, Vec<f64>, usize, usize) {
    let out_h = h.div_ceil(stride);
    let out_w = w.div_ceil(stride);
    let pad_top = (((out_h - 1) * stride + kh).saturating_sub(h)) / 2;
    let pad_left = (((out_w - 1) * stride + kw).saturating_sub(w)) / 2;
    let mut out = Vec::with_capacity(out_h * out_w * oc);
    let mut scales = Vec::with_capacity(out_h * out_w * oc);
    for oy in 0..out_h {
        for ox in 0..out_w {
            for o in 0..oc {
                let mut acc = 0.0f64;
                let mut scale = (bias[o] as f64).abs();
                for ky in 0..kh {
                    for kx in 0..kw {
                        for ic in 0..c {
                            let iy = (oy * stride + ky) as isize - pad_top as isize;
                            let ix = (ox * stride + kx) as isize - pad_left as isize;
                            if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                continue;
                            }
                            let x = input[(iy as usize * w + ix as usize) * c + ic] as f64;
                            let wv = weights[((o * kh + ky) * kw + kx) * c + ic] as f64;
                            acc += x * wv;
                            scale += (x * wv).abs();
                        }
                    }
                }
                out.push(acc + bias[o] as f64);
                scales.push(scale);
            }
        }
    }
    (out, scales, out_h, out_w)
}

/// Dense layer, `weights` row-major `out x in`.
pub fn naive_dense(input: &[f32], weights: &[f32], bias: &[f32]) -> Vec<f64> {
    let n = input.len();
    bias.iter()
        .enumerate()
        .map(|(o, &b)| {
            (0..n)
                .map(|i| weights[o * n + i] as f64 * input[i] as f64)
                .sum::<f64>()
                + b as f64
        })
        .collect()
}

/// O(N^2) one-sided power spectrum, bins `0..=N/2`.
pub fn naive_dft_power(frame: &[f32]) -> Vec<f64> {
    let n = frame.len();
    (0..=n / 2)
        .map(|k| {
            let (mut re, mut im) = (0.0f64, 0.0f64);
            for (t, &x) in frame.iter().enumerate() {
                let angle = -2.0 * PI * ((k * t) % n) as f64 / n as f64;
                re += x as f64 * angle.cos();
                im += x as f64 * angle.sin();
            }
            re * re + im * im
        })
        .collect()
}

/// Layer description for [`cost_oracle`], independent of the core crate's types.
#[derive(Clone, Copy, Debug)]
pub enum OracleLayer {
    /// Square kernel, stride, output channels.
    Conv(usize, usize, usize),
    Pool(usize, usize),
    Dense(usize),
    Flatten,
    GlobalAvg,
    Softmax,
}

/// `(params, macs)` per layer, by explicit shape walking.
///
/// Conv: params `k*k*c*n + n`, MACs one per tap per output element.
/// Dense: params `i*n + n`, MACs reported as the same bias-inclusive figure.
pub fn cost_oracle(
    (mut h, mut w, mut c): (usize, usize, usize),
    layers: &[OracleLayer],
) -> Vec<(u64, u64)> {
    let mut flat = 0usize;
    layers
        .iter()
        .map(|layer| match *layer {
            OracleLayer::Conv(k, s, n) => {
                let (oh, ow) = (h.div_ceil(s), w.div_ceil(s));
                let taps = (k * k * c) as u64;
                let cost = (taps * n as u64 + n as u64, (oh * ow * n) as u64 * taps);
                (h, w, c) = (oh, ow, n);
                cost
            }
            OracleLayer::Pool(ph, pw) => {
                (h, w) = (h / ph, w / pw);
                (0, 0)
            }
            OracleLayer::Flatten => {
                flat = h * w * c;
                (0, 0)
            }
            OracleLayer::GlobalAvg => {
                flat = c;
                (0, 0)
            }
            OracleLayer::Dense(n) => {
                let p = (flat * n + n) as u64;
                flat = n;
                (p, p)
            }
            OracleLayer::Softmax => (0, 0),
        })
        .collect()
}

/// Small deterministic generator (SplitMix64) for fixtures.
#[derive(Clone, Debug)]
pub struct SplitMix(u64);

impl SplitMix {
    pub fn new(seed: u64) -> Self {
        SplitMix(seed)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f32, hi: f32) -> f32 {
        let u = (self.next_u64() >> 40) as f32 / (1u64 << 24) as f32;
        lo + (hi - lo) * u
    }

    pub fn vec(&mut self, n: usize, lo: f32, hi: f32) -> Vec<f32> {
        (0..n).map(|_| self.uniform(lo, hi)).collect()
    }
}

/// A sum of two tones plus a little noise, `seconds` long.
pub fn test_signal(sample_rate: u32, seconds: f64, seed: u64) -> Vec<f32> {
    let n = (sample_rate as f64 * seconds).round() as usize;
    let mut rng = SplitMix::new(seed);
    (0..n)
        .map(|i| {
            let t = i as f64 / sample_rate as f64;
            let v = 0.4 * (2.0 * PI * 440.0 * t).sin() + 0.2 * (2.0 * PI * 1800.0 * t + 0.3).sin();
            v as f32 + rng.uniform(-0.05, 0.05)
        })
        .collect()
}

/// Writes mono PCM16 WAV.
pub fn write_wav_pcm16(path: &Path, sample_rate: u32, samples: &[f32]) {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(path, spec).expect("create wav");
    for &s in samples {
        let v = (s.clamp(-1.0, 1.0) * 32_767.0).round() as i16;
        w.write_sample(v).expect("write sample");
    }
    w.finalize().expect("finalize wav");
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dft_of_impulse_is_flat() {
        let mut f = vec![0.0; 8];
        f[0] = 1.0;
        assert!(naive_dft_power(&f).iter().all(|&p| (p - 1.0).abs() < 1e-12));
    }

    #[test]
    fn naive_conv_identity() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let (y, _, oh, ow) = naive_conv2d(&x, (2, 2, 1), &[1.0], &[0.0], (1, 1, 1), 1);
        assert_eq!((oh, ow), (2, 2));
        assert_eq!(y, vec![1.0, 2.0, 3.0, 4.0]);
    }
}
