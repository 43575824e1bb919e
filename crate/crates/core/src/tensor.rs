//! Deterministic CPU kernels for rank-3 feature maps.
//!
//! Feature maps are stored row-major in `(height, width, channels)` order.
//! Every kernel accumulates in `f32` in a fixed order, so results do not
//! depend on thread count or call history:
//!
//! * `conv2d`: for each output element, products are summed over
//!   `(kernel_row, kernel_col, in_channel)` in that nesting order starting
//!   from `0.0`, then the bias is added once.
//! * `dense`: products are summed over input index `0..in` starting from
//!   `0.0`, then the bias is added once.
//!
//! A 1x1 convolution over a `1x1xC` map therefore performs bit-for-bit the
//! same arithmetic as a dense layer with the same weights.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Spatial/channel dimensions of a feature map.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape3 {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl Shape3 {
    pub const fn new(height: usize, width: usize, channels: usize) -> Self {
        Shape3 {
            height,
            width,
            channels,
        }
    }

    pub const fn len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl std::fmt::Display for Shape3 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}", self.height, self.width, self.channels)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Shape3,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        let shape = Shape3::new(height, width, channels);
        if shape.is_empty() {
            return Err(Error::contract(format!(
                "tensor dimensions must be positive, got {shape}"
            )));
        }
        if data.len() != shape.len() {
            return Err(Error::contract(format!(
                "tensor {shape} needs {} values, got {}",
                shape.len(),
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f32) -> Result<Self> {
        Self::new(
            height,
            width,
            channels,
            vec![value; height * width * channels],
        )
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Result<Self> {
        Self::filled(height, width, channels, 0.0)
    }

    /// Builds a tensor by evaluating `f(row, col, channel)` in storage order.
    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(y, x, c));
                }
            }
        }
        Self::new(height, width, channels, data)
    }

    pub fn shape(&self) -> Shape3 {
        self.shape
    }

    pub fn height(&self) -> usize {
        self.shape.height
    }

    pub fn width(&self) -> usize {
        self.shape.width
    }

    pub fn channels(&self) -> usize {
        self.shape.channels
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f32 {
        self.data[(y * self.shape.width + x) * self.shape.channels + c]
    }
}

/// Convolution filter bank, weights indexed `(out_channel, kernel_row, kernel_col, in_channel)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvWeights {
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub weights: Vec<f32>,
    pub bias: Vec<f32>,
}

impl ConvWeights {
    pub fn new(
        kernel_h: usize,
        kernel_w: usize,
        in_channels: usize,
        out_channels: usize,
        weights: Vec<f32>,
        bias: Vec<f32>,
    ) -> Result<Self> {
        if kernel_h == 0 || kernel_w == 0 || in_channels == 0 || out_channels == 0 {
            return Err(Error::contract("conv dimensions must be positive"));
        }
        let expected = kernel_h * kernel_w * in_channels * out_channels;
        if weights.len() != expected {
            return Err(Error::contract(format!(
                "conv {kernel_h}x{kernel_w}x{in_channels}x{out_channels} needs {expected} weights, got {}",
                weights.len()
            )));
        }
        if bias.len() != out_channels {
            return Err(Error::contract(format!(
                "conv bias needs {out_channels} values, got {}",
                bias.len()
            )));
        }
        Ok(ConvWeights {
            kernel_h,
            kernel_w,
            in_channels,
            out_channels,
            weights,
            bias,
        })
    }

    #[inline]
    pub fn weight(&self, oc: usize, ky: usize, kx: usize, ic: usize) -> f32 {
        self.weights[((oc * self.kernel_h + ky) * self.kernel_w + kx) * self.in_channels + ic]
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

/// Affine layer, weights row-major `out_features x in_features`.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseWeights {
    pub in_features: usize,
    pub out_features: usize,
    pub weights: Vec<f32>,
    pub bias: Vec<f32>,
}

impl DenseWeights {
    pub fn new(
        in_features: usize,
        out_features: usize,
        weights: Vec<f32>,
        bias: Vec<f32>,
    ) -> Result<Self> {
        if in_features == 0 || out_features == 0 {
            return Err(Error::contract("dense dimensions must be positive"));
        }
        if weights.len() != in_features * out_features {
            return Err(Error::contract(format!(
                "dense {out_features}x{in_features} needs {} weights, got {}",
                in_features * out_features,
                weights.len()
            )));
        }
        if bias.len() != out_features {
            return Err(Error::contract(format!(
                "dense bias needs {out_features} values, got {}",
                bias.len()
            )));
        }
        Ok(DenseWeights {
            in_features,
            out_features,
            weights,
            bias,
        })
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

/// Observer for the multiply-accumulates a kernel actually executes.
pub trait MacProbe {
    fn record(&mut self, macs: u64);
}

impl MacProbe for () {
    #[inline(always)]
    fn record(&mut self, _macs: u64) {}
}

/// Running total of executed multiply-accumulates.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct MacCounter(pub u64);

impl MacProbe for MacCounter {
    #[inline]
    fn record(&mut self, macs: u64) {
        self.0 += macs;
    }
}

/// "Same" padding geometry along one axis: `(output_len, pad_before, pad_after)`.
///
/// The output length is `ceil(input / stride)`; when the total padding is odd
/// the extra zero goes after the data.
pub fn same_padding(input: usize, kernel: usize, stride: usize) -> (usize, usize, usize) {
    let out = input.div_ceil(stride);
    let total = ((out - 1) * stride + kernel).saturating_sub(input);
    (out, total / 2, total - total / 2)
}

pub fn conv2d(input: &Tensor, w: &ConvWeights, stride: usize) -> Result<Tensor> {
    conv2d_probed(input, w, stride, &mut ())
}

/// Same-padded 2-D convolution that reports executed MACs to `probe`.
///
/// The input is materialized with its zero border, so every output element
/// runs the full `kernel_h * kernel_w * in_channels` products.
pub fn conv2d_probed<P: MacProbe>(
    input: &Tensor,
    w: &ConvWeights,
    stride: usize,
    probe: &mut P,
) -> Result<Tensor> {
    if !(1..=2).contains(&stride) {
        return Err(Error::Unsupported(format!(
            "conv stride {stride} (supported: 1, 2)"
        )));
    }
    if input.channels() != w.in_channels {
        return Err(Error::contract(format!(
            "conv expects {} input channels, tensor has {}",
            w.in_channels,
            input.channels()
        )));
    }

    let (h, wd, c) = (input.height(), input.width(), input.channels());
    let (kh, kw, oc) = (w.kernel_h, w.kernel_w, w.out_channels);
    let (out_h, pad_top, pad_bottom) = same_padding(h, kh, stride);
    let (out_w, pad_left, pad_right) = same_padding(wd, kw, stride);

    let padded_w = wd + pad_left + pad_right;
    let padded_h = h + pad_top + pad_bottom;
    let mut padded = vec![0.0f32; padded_h * padded_w * c];
    for y in 0..h {
        let src = &input.data()[y * wd * c..(y + 1) * wd * c];
        let dst_start = ((y + pad_top) * padded_w + pad_left) * c;
        padded[dst_start..dst_start + wd * c].copy_from_slice(src);
    }

    // Transpose to [(ky, kx, ic)][oc] so the innermost loop runs across
    // output channels; each channel keeps its own sequential accumulator.
    let taps = kh * kw * c;
    let mut transposed = vec![0.0f32; taps * oc];
    for o in 0..oc {
        for k in 0..taps {
            transposed[k * oc + o] = w.weights[o * taps + k];
        }
    }

    let row_taps = kw * c;
    let mut out = vec![0.0f32; out_h * out_w * oc];
    let mut acc = vec![0.0f32; oc];
    for oy in 0..out_h {
        for ox in 0..out_w {
            acc.fill(0.0);
            for ky in 0..kh {
                let start = ((oy * stride + ky) * padded_w + ox * stride) * c;
                let window = &padded[start..start + row_taps];
                let wrow = &transposed[ky * row_taps * oc..(ky + 1) * row_taps * oc];
                for (&xv, wcol) in window.iter().zip(wrow.chunks_exact(oc)) {
                    for (a, &wv) in acc.iter_mut().zip(wcol) {
                        *a += xv * wv;
                    }
                }
                probe.record((row_taps * oc) as u64);
            }
            let dst = &mut out[(oy * out_w + ox) * oc..(oy * out_w + ox + 1) * oc];
            for ((d, &a), &b) in dst.iter_mut().zip(&acc).zip(&w.bias) {
                *d = a + b;
            }
        }
    }
    Tensor::new(out_h, out_w, oc, out)
}

/// Non-overlapping max pooling. Dimensions must divide evenly.
pub fn maxpool(input: &Tensor, pool_h: usize, pool_w: usize) -> Result<Tensor> {
    if !(1..=2).contains(&pool_h) || !(1..=2).contains(&pool_w) {
        return Err(Error::Unsupported(format!(
            "max pool {pool_h}x{pool_w} (supported sizes: 1, 2)"
        )));
    }
    let (h, w, c) = (input.height(), input.width(), input.channels());
    if h % pool_h != 0 || w % pool_w != 0 {
        return Err(Error::contract(format!(
            "max pool {pool_h}x{pool_w} does not divide input {}",
            input.shape()
        )));
    }
    let (out_h, out_w) = (h / pool_h, w / pool_w);
    Tensor::from_fn(out_h, out_w, c, |oy, ox, ch| {
        let mut m = f32::NEG_INFINITY;
        for dy in 0..pool_h {
            for dx in 0..pool_w {
                m = m.max(input.get(oy * pool_h + dy, ox * pool_w + dx, ch));
            }
        }
        m
    })
}

/// Per-channel mean over all spatial positions, summed in row-major order.
pub fn global_avg_pool(input: &Tensor) -> Vec<f32> {
    let c = input.channels();
    let mut sums = vec![0.0f32; c];
    for pixel in input.data().chunks_exact(c) {
        for (s, &v) in sums.iter_mut().zip(pixel) {
            *s += v;
        }
    }
    let n = (input.height() * input.width()) as f32;
    sums.into_iter().map(|s| s / n).collect()
}

pub fn relu(input: &Tensor) -> Tensor {
    let mut out = input.clone();
    relu_in_place(&mut out);
    out
}

pub fn relu_in_place(t: &mut Tensor) {
    for v in &mut t.data {
        *v = v.max(0.0);
    }
}

pub fn relu_vec_in_place(v: &mut [f32]) {
    for x in v {
        *x = x.max(0.0);
    }
}

/// Numerically stable softmax; exponentials and the normalizer are taken in `f64`.
pub fn softmax(logits: &[f32]) -> Result<Vec<f32>> {
    if logits.is_empty() {
        return Err(Error::contract("softmax of an empty vector"));
    }
    if let Some(bad) = logits.iter().find(|v| !v.is_finite()) {
        return Err(Error::contract(format!(
            "softmax input is not finite: {bad}"
        )));
    }
    let max = logits.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
    let exps: Vec<f64> = logits.iter().map(|&v| (v as f64 - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| (e / total) as f32).collect())
}

pub fn dense(input: &[f32], w: &DenseWeights) -> Result<Vec<f32>> {
    dense_probed(input, w, &mut ())
}

pub fn dense_probed<P: MacProbe>(
    input: &[f32],
    w: &DenseWeights,
    probe: &mut P,
) -> Result<Vec<f32>> {
    if input.len() != w.in_features {
        return Err(Error::contract(format!(
            "dense expects {} inputs, got {}",
            w.in_features,
            input.len()
        )));
    }
    let out = w
        .weights
        .chunks_exact(w.in_features)
        .zip(&w.bias)
        .map(|(row, &b)| {
            let mut acc = 0.0f32;
            for (&wv, &xv) in row.iter().zip(input) {
                acc += wv * xv;
            }
            acc + b
        })
        .collect();
    probe.record((w.in_features * w.out_features) as u64);
    Ok(out)
}
