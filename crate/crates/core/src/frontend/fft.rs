use std::f64::consts::PI;

use num_complex::Complex32;

use crate::error::{Error, Result};

/// Precomputed iterative radix-2 decimation-in-time FFT of a fixed size.
#[derive(Clone, Debug)]
pub struct Fft {
    n: usize,
    twiddles: Vec<Complex32>,
    bit_reverse: Vec<usize>,
}

impl Fft {
    pub fn new(n: usize) -> Result<Self> {
        if !n.is_power_of_two() {
            return Err(Error::Unsupported(format!(
                "FFT length {n} is not a power of two"
            )));
        }
        let twiddles = (0..n / 2)
            .map(|k| {
                let angle = -2.0 * PI * k as f64 / n as f64;
                Complex32::new(angle.cos() as f32, angle.sin() as f32)
            })
            .collect();
        let bits = n.trailing_zeros();
        let bit_reverse = (0..n)
            .map(|i| {
                if bits == 0 {
                    0
                } else {
                    i.reverse_bits() >> (usize::BITS - bits)
                }
            })
            .collect();
        Ok(Fft {
            n,
            twiddles,
            bit_reverse,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// In-place forward transform, `X[k] = sum_t x[t] e^{-2 pi i k t / N}`.
    pub fn process(&self, buf: &mut [Complex32]) {
        assert_eq!(buf.len(), self.n, "FFT buffer length");
        for (i, &j) in self.bit_reverse.iter().enumerate() {
            if i < j {
                buf.swap(i, j);
            }
        }
        let mut len = 2;
        while len <= self.n {
            let half = len / 2;
            let step = self.n / len;
            for block in buf.chunks_exact_mut(len) {
                let (lo, hi) = block.split_at_mut(half);
                for (j, (a, b)) in lo.iter_mut().zip(hi.iter_mut()).enumerate() {
                    let t = *b * self.twiddles[j * step];
                    *b = *a - t;
                    *a += t;
                }
            }
            len <<= 1;
        }
    }

    /// One-sided power spectrum `|X[k]|^2` for `k = 0..=N/2` of a real frame.
    pub fn power_spectrum(&self, frame: &[f32]) -> Vec<f32> {
        let mut buf: Vec<Complex32> = frame.iter().map(|&v| Complex32::new(v, 0.0)).collect();
        self.process(&mut buf);
        buf[..self.n / 2 + 1].iter().map(|c| c.norm_sqr()).collect()
    }
}

pub fn fft_power_spectrum(frame: &[f32]) -> Result<Vec<f32>> {
    Ok(Fft::new(frame.len())?.power_spectrum(frame))
}
