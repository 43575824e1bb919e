//! Network descriptions, shape inference, the three reference presets and the forward pass.

use std::fmt;
use std::str::FromStr;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, IntegrityError, Result};
use crate::tensor::{
    conv2d_probed, dense_probed, global_avg_pool, maxpool, relu_in_place, relu_vec_in_place,
    softmax, ConvWeights, DenseWeights, MacCounter, Shape3, Tensor,
};

/// Class count of the reference presets.
pub const PRESET_CLASSES: usize = 28;

/// Network input of the presets: 400 frames x 64 mel bands x 1 channel.
pub const PRESET_INPUT: Shape3 = Shape3::new(400, 64, 1);

/// One layer, in the vocabulary of the reference cost table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv {
        kernel_h: usize,
        kernel_w: usize,
        stride: usize,
        out_channels: usize,
    },
    MaxPool {
        pool_h: usize,
        pool_w: usize,
    },
    GlobalAvgPool,
    Dense {
        out_features: usize,
    },
    Flatten,
    Softmax,
}

impl LayerSpec {
    /// Square `kernel x kernel` convolution.
    pub const fn conv(kernel: usize, stride: usize, out_channels: usize) -> Self {
        LayerSpec::Conv {
            kernel_h: kernel,
            kernel_w: kernel,
            stride,
            out_channels,
        }
    }

    pub const fn maxpool(pool_h: usize, pool_w: usize) -> Self {
        LayerSpec::MaxPool { pool_h, pool_w }
    }

    pub const fn dense(out_features: usize) -> Self {
        LayerSpec::Dense { out_features }
    }

    pub fn has_weights(&self) -> bool {
        matches!(self, LayerSpec::Conv { .. } | LayerSpec::Dense { .. })
    }

    /// Row label as printed in the cost table, e.g. `conv 3, 2, 64` or `max pool 2x2`.
    pub fn table_name(&self) -> String {
        match *self {
            LayerSpec::Conv {
                kernel_h,
                kernel_w,
                stride,
                out_channels,
            } if kernel_h == kernel_w => format!("conv {kernel_h}, {stride}, {out_channels}"),
            LayerSpec::Conv {
                kernel_h,
                kernel_w,
                stride,
                out_channels,
            } => format!("conv {kernel_h}x{kernel_w}, {stride}, {out_channels}"),
            LayerSpec::MaxPool { pool_h, pool_w } => format!("max pool {pool_h}x{pool_w}"),
            LayerSpec::GlobalAvgPool => "avg pool".into(),
            LayerSpec::Dense { out_features } => format!("fc {out_features}"),
            LayerSpec::Flatten => "flatten".into(),
            LayerSpec::Softmax => "activation".into(),
        }
    }
}

impl fmt::Display for LayerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.table_name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Arch {
    CnnFc,
    CnnC,
    CnnCnp,
    Custom,
}

impl Arch {
    pub const PRESETS: [Arch; 3] = [Arch::CnnFc, Arch::CnnC, Arch::CnnCnp];

    pub fn name(&self) -> &'static str {
        match self {
            Arch::CnnFc => "cnn-fc",
            Arch::CnnC => "cnn-c",
            Arch::CnnCnp => "cnn-cnp",
            Arch::Custom => "custom",
        }
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Arch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cnn-fc" => Ok(Arch::CnnFc),
            "cnn-c" => Ok(Arch::CnnC),
            "cnn-cnp" => Ok(Arch::CnnCnp),
            "custom" => Ok(Arch::Custom),
            other => Err(Error::UnknownPreset(other.to_string())),
        }
    }
}

/// Output of a layer: a feature map or a flat vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerShape {
    Map(Shape3),
    Vector(usize),
}

impl LayerShape {
    pub fn len(&self) -> usize {
        match self {
            LayerShape::Map(s) => s.len(),
            LayerShape::Vector(n) => *n,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl fmt::Display for LayerShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LayerShape::Map(s) => write!(f, "{s}"),
            LayerShape::Vector(n) => write!(f, "{n}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub arch: Arch,
    pub input_shape: Shape3,
    pub layers: Vec<LayerSpec>,
    pub num_classes: usize,
}

fn conv_stack(strides: [usize; 4], pooled: bool, classes: usize) -> Vec<LayerSpec> {
    let mut layers = vec![
        LayerSpec::conv(3, strides[0], 64),
        LayerSpec::conv(3, strides[1], 64),
    ];
    if pooled {
        layers.push(LayerSpec::maxpool(2, 2));
    }
    layers.extend([
        LayerSpec::conv(3, strides[2], 128),
        LayerSpec::conv(3, strides[3], 128),
    ]);
    if pooled {
        layers.push(LayerSpec::maxpool(2, 2));
    }
    layers.extend([
        LayerSpec::conv(3, 1, 128),
        LayerSpec::conv(1, 1, 128),
        LayerSpec::conv(1, 1, classes),
        LayerSpec::GlobalAvgPool,
        LayerSpec::Softmax,
    ]);
    layers
}

impl NetworkSpec {
    pub fn preset(arch: Arch) -> Result<Self> {
        Self::preset_with_classes(arch, PRESET_CLASSES)
    }

    /// A preset with its classifier head resized to `num_classes` outputs.
    pub fn preset_with_classes(arch: Arch, num_classes: usize) -> Result<Self> {
        if num_classes == 0 {
            return Err(Error::InvalidArgument(
                "num_classes must be positive".into(),
            ));
        }
        let layers = match arch {
            Arch::CnnFc => vec![
                LayerSpec::conv(3, 1, 64),
                LayerSpec::conv(3, 1, 64),
                LayerSpec::maxpool(1, 2),
                LayerSpec::conv(3, 1, 128),
                LayerSpec::conv(3, 1, 128),
                LayerSpec::maxpool(2, 2),
                LayerSpec::Flatten,
                LayerSpec::dense(1024),
                LayerSpec::dense(1024),
                LayerSpec::dense(num_classes),
                LayerSpec::Softmax,
            ],
            Arch::CnnC => conv_stack([1, 1, 1, 1], true, num_classes),
            Arch::CnnCnp => conv_stack([1, 2, 1, 2], false, num_classes),
            Arch::Custom => return Err(Error::UnknownPreset("custom".into())),
        };
        Ok(NetworkSpec {
            arch,
            input_shape: PRESET_INPUT,
            layers,
            num_classes,
        })
    }

    /// Output shape of every layer, in order.
    pub fn infer_shapes(&self) -> Result<Vec<LayerShape>> {
        let mut shapes = Vec::with_capacity(self.layers.len());
        let mut current = LayerShape::Map(self.input_shape);
        if self.input_shape.is_empty() {
            return Err(Error::Shape {
                index: 0,
                layer: "input".into(),
                reason: format!("input shape {} has a zero dimension", self.input_shape),
            });
        }
        for (index, layer) in self.layers.iter().enumerate() {
            current = next_shape(layer, current).map_err(|reason| Error::Shape {
                index,
                layer: layer.table_name(),
                reason,
            })?;
            shapes.push(current);
        }
        Ok(shapes)
    }

    /// Shape inference plus the end-to-end contract: the last layer is a
    /// softmax over `num_classes` outputs.
    pub fn validate(&self) -> Result<Vec<LayerShape>> {
        let shapes = self.infer_shapes()?;
        let last = self.layers.len().saturating_sub(1);
        if self.layers.last() != Some(&LayerSpec::Softmax) {
            return Err(Error::Shape {
                index: last,
                layer: self
                    .layers
                    .last()
                    .map_or("input".into(), |l| l.table_name()),
                reason: "network must end with a softmax activation".into(),
            });
        }
        if shapes.last() != Some(&LayerShape::Vector(self.num_classes)) {
            return Err(Error::Shape {
                index: last,
                layer: "activation".into(),
                reason: format!(
                    "final output {} does not match {} classes",
                    shapes.last().unwrap(),
                    self.num_classes
                ),
            });
        }
        Ok(shapes)
    }

    /// Input shape seen by each layer (the previous layer's output).
    pub fn input_shapes(&self) -> Result<Vec<LayerShape>> {
        let mut inputs = vec![LayerShape::Map(self.input_shape)];
        let outputs = self.infer_shapes()?;
        inputs.extend_from_slice(&outputs[..outputs.len().saturating_sub(1)]);
        inputs.truncate(self.layers.len());
        Ok(inputs)
    }

    /// Number of stored weights and biases (conv and dense layers only).
    pub fn weight_count(&self) -> Result<usize> {
        Ok(self.weight_shapes()?.iter().map(WeightShape::len).sum())
    }

    /// Expected weight tensor shape for each weighted layer, in layer order.
    pub fn weight_shapes(&self) -> Result<Vec<WeightShape>> {
        let inputs = self.input_shapes()?;
        Ok(self
            .layers
            .iter()
            .zip(inputs)
            .filter_map(|(layer, input)| match (*layer, input) {
                (
                    LayerSpec::Conv {
                        kernel_h,
                        kernel_w,
                        out_channels,
                        ..
                    },
                    LayerShape::Map(s),
                ) => Some(WeightShape::Conv {
                    kernel_h,
                    kernel_w,
                    in_channels: s.channels,
                    out_channels,
                }),
                (LayerSpec::Dense { out_features }, LayerShape::Vector(n)) => {
                    Some(WeightShape::Dense {
                        in_features: n,
                        out_features,
                    })
                }
                _ => None,
            })
            .collect())
    }
}

fn next_shape(layer: &LayerSpec, input: LayerShape) -> std::result::Result<LayerShape, String> {
    match (*layer, input) {
        (
            LayerSpec::Conv {
                kernel_h,
                kernel_w,
                stride,
                out_channels,
            },
            LayerShape::Map(s),
        ) => {
            if ![1, 3].contains(&kernel_h) || ![1, 3].contains(&kernel_w) {
                return Err(format!("kernel {kernel_h}x{kernel_w} unsupported (1 or 3)"));
            }
            if ![1, 2].contains(&stride) {
                return Err(format!("stride {stride} unsupported (1 or 2)"));
            }
            if out_channels == 0 {
                return Err("zero output channels".into());
            }
            // A stride that cannot halve a dimension has exhausted the map.
            if s.height / stride == 0 || s.width / stride == 0 {
                return Err(format!(
                    "dimension underflow: stride {stride} on {s} would reduce a spatial dim below 1"
                ));
            }
            Ok(LayerShape::Map(Shape3::new(
                s.height.div_ceil(stride),
                s.width.div_ceil(stride),
                out_channels,
            )))
        }
        (LayerSpec::MaxPool { pool_h, pool_w }, LayerShape::Map(s)) => {
            if ![1, 2].contains(&pool_h) || ![1, 2].contains(&pool_w) {
                return Err(format!("pool {pool_h}x{pool_w} unsupported (1 or 2)"));
            }
            if s.height % pool_h != 0 || s.width % pool_w != 0 {
                return Err(format!("pool {pool_h}x{pool_w} does not divide {s}"));
            }
            Ok(LayerShape::Map(Shape3::new(
                s.height / pool_h,
                s.width / pool_w,
                s.channels,
            )))
        }
        (LayerSpec::GlobalAvgPool, LayerShape::Map(s)) => Ok(LayerShape::Vector(s.channels)),
        (LayerSpec::Flatten, LayerShape::Map(s)) => Ok(LayerShape::Vector(s.len())),
        (LayerSpec::Dense { out_features }, LayerShape::Vector(_)) => {
            if out_features == 0 {
                return Err("zero output features".into());
            }
            Ok(LayerShape::Vector(out_features))
        }
        (LayerSpec::Softmax, LayerShape::Vector(n)) => Ok(LayerShape::Vector(n)),
        (layer, input) => Err(format!("cannot apply {layer} to input {input}")),
    }
}

pub fn build_preset(name: &str) -> Result<NetworkSpec> {
    match name.parse::<Arch>()? {
        Arch::Custom => Err(Error::UnknownPreset(name.to_string())),
        arch => NetworkSpec::preset(arch),
    }
}

pub fn infer_shapes(spec: &NetworkSpec) -> Result<Vec<LayerShape>> {
    spec.infer_shapes()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WeightShape {
    Conv {
        kernel_h: usize,
        kernel_w: usize,
        in_channels: usize,
        out_channels: usize,
    },
    Dense {
        in_features: usize,
        out_features: usize,
    },
}

impl WeightShape {
    /// Weights plus biases.
    pub fn len(&self) -> usize {
        match *self {
            WeightShape::Conv {
                kernel_h,
                kernel_w,
                in_channels,
                out_channels,
            } => (kernel_h * kernel_w * in_channels + 1) * out_channels,
            WeightShape::Dense {
                in_features,
                out_features,
            } => (in_features + 1) * out_features,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn fan_in(&self) -> usize {
        match *self {
            WeightShape::Conv {
                kernel_h,
                kernel_w,
                in_channels,
                ..
            } => kernel_h * kernel_w * in_channels,
            WeightShape::Dense { in_features, .. } => in_features,
        }
    }

    fn outputs(&self) -> usize {
        match *self {
            WeightShape::Conv { out_channels, .. } => out_channels,
            WeightShape::Dense { out_features, .. } => out_features,
        }
    }

    /// Builds the layer from a flat buffer holding the weights followed by the biases.
    pub fn build(&self, mut values: Vec<f32>) -> Result<LayerWeights> {
        if values.len() != self.len() {
            return Err(Error::contract(format!(
                "{self:?} needs {} values, got {}",
                self.len(),
                values.len()
            )));
        }
        let bias = values.split_off(values.len() - self.outputs());
        Ok(match *self {
            WeightShape::Conv {
                kernel_h,
                kernel_w,
                in_channels,
                out_channels,
            } => LayerWeights::Conv(ConvWeights::new(
                kernel_h,
                kernel_w,
                in_channels,
                out_channels,
                values,
                bias,
            )?),
            WeightShape::Dense {
                in_features,
                out_features,
            } => LayerWeights::Dense(DenseWeights::new(in_features, out_features, values, bias)?),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum LayerWeights {
    Conv(ConvWeights),
    Dense(DenseWeights),
}

impl LayerWeights {
    pub fn shape(&self) -> WeightShape {
        match self {
            LayerWeights::Conv(w) => WeightShape::Conv {
                kernel_h: w.kernel_h,
                kernel_w: w.kernel_w,
                in_channels: w.in_channels,
                out_channels: w.out_channels,
            },
            LayerWeights::Dense(w) => WeightShape::Dense {
                in_features: w.in_features,
                out_features: w.out_features,
            },
        }
    }

    /// Weights then biases, in storage order.
    pub fn values(&self) -> impl Iterator<Item = f32> + '_ {
        let (w, b) = match self {
            LayerWeights::Conv(c) => (&c.weights, &c.bias),
            LayerWeights::Dense(d) => (&d.weights, &d.bias),
        };
        w.iter().chain(b.iter()).copied()
    }

    fn values_mut(&mut self) -> impl Iterator<Item = &mut f32> + '_ {
        let (w, b) = match self {
            LayerWeights::Conv(c) => (&mut c.weights, &mut c.bias),
            LayerWeights::Dense(d) => (&mut d.weights, &mut d.bias),
        };
        w.iter_mut().chain(b.iter_mut())
    }
}

/// Weights for every conv/dense layer of a network, in layer order.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelWeights {
    layers: Vec<LayerWeights>,
}

impl ModelWeights {
    pub fn new(layers: Vec<LayerWeights>) -> Self {
        ModelWeights { layers }
    }

    pub fn layers(&self) -> &[LayerWeights] {
        &self.layers
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.shape().len()).sum()
    }

    pub fn zeros(spec: &NetworkSpec) -> Result<Self> {
        let layers = spec
            .weight_shapes()?
            .into_iter()
            .map(|s| s.build(vec![0.0; s.len()]))
            .collect::<Result<_>>()?;
        Ok(ModelWeights { layers })
    }

    /// Weights and biases drawn uniformly from `[-1/sqrt(fan_in), 1/sqrt(fan_in))`
    /// with a ChaCha8 stream seeded by `seed`, layer by layer in storage order.
    pub fn seeded_uniform(spec: &NetworkSpec, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = spec
            .weight_shapes()?
            .into_iter()
            .map(|s| {
                let bound = 1.0 / (s.fan_in() as f32).sqrt();
                let values = (0..s.len())
                    .map(|_| rng.random_range(-bound..bound))
                    .collect();
                s.build(values)
            })
            .collect::<Result<_>>()?;
        Ok(ModelWeights { layers })
    }

    /// Applies `f` to every weight and bias.
    pub fn map_values(&mut self, mut f: impl FnMut(f32) -> f32) {
        for layer in &mut self.layers {
            for v in layer.values_mut() {
                *v = f(*v);
            }
        }
    }

    pub fn check(&self, spec: &NetworkSpec) -> Result<()> {
        let expected = spec.weight_shapes()?;
        if expected.len() != self.layers.len() {
            return Err(IntegrityError::ShapeMismatch(format!(
                "spec has {} weighted layers, weights have {}",
                expected.len(),
                self.layers.len()
            ))
            .into());
        }
        for (i, (want, have)) in expected.iter().zip(&self.layers).enumerate() {
            if *want != have.shape() {
                return Err(IntegrityError::ShapeMismatch(format!(
                    "weighted layer {i}: expected {want:?}, found {:?}",
                    have.shape()
                ))
                .into());
            }
        }
        Ok(())
    }
}

enum Activation {
    Map(Tensor),
    Vector(Vec<f32>),
}

/// Result of a forward pass with per-layer executed-MAC counts.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardTrace {
    pub probabilities: Vec<f32>,
    pub layer_macs: Vec<u64>,
}

/// Runs the network and returns class probabilities.
///
/// ReLU follows every conv/dense layer except the last one, whose outputs
/// are the logits.
pub fn forward(spec: &NetworkSpec, weights: &ModelWeights, input: &Tensor) -> Result<Vec<f32>> {
    Ok(forward_traced(spec, weights, input)?.probabilities)
}

pub fn forward_traced(
    spec: &NetworkSpec,
    weights: &ModelWeights,
    input: &Tensor,
) -> Result<ForwardTrace> {
    spec.validate()?;
    weights.check(spec)?;
    if input.shape() != spec.input_shape {
        return Err(Error::contract(format!(
            "input {} does not match network input {}",
            input.shape(),
            spec.input_shape
        )));
    }
    let last_weighted = spec.layers.iter().rposition(LayerSpec::has_weights);
    let mut params = weights.layers().iter();
    let mut layer_macs = Vec::with_capacity(spec.layers.len());
    let mut act = Activation::Map(input.clone());

    for (index, layer) in spec.layers.iter().enumerate() {
        let mut counter = MacCounter::default();
        let hidden = Some(index) != last_weighted;
        act = match (
            layer,
            act,
            layer.has_weights().then(|| params.next()).flatten(),
        ) {
            (LayerSpec::Conv { stride, .. }, Activation::Map(x), Some(LayerWeights::Conv(w))) => {
                let mut y = conv2d_probed(&x, w, *stride, &mut counter)?;
                if hidden {
                    relu_in_place(&mut y);
                }
                Activation::Map(y)
            }
            (LayerSpec::Dense { .. }, Activation::Vector(x), Some(LayerWeights::Dense(w))) => {
                let mut y = dense_probed(&x, w, &mut counter)?;
                if hidden {
                    relu_vec_in_place(&mut y);
                }
                Activation::Vector(y)
            }
            (LayerSpec::MaxPool { pool_h, pool_w }, Activation::Map(x), None) => {
                Activation::Map(maxpool(&x, *pool_h, *pool_w)?)
            }
            (LayerSpec::GlobalAvgPool, Activation::Map(x), None) => {
                Activation::Vector(global_avg_pool(&x))
            }
            (LayerSpec::Flatten, Activation::Map(x), None) => Activation::Vector(x.into_data()),
            (LayerSpec::Softmax, Activation::Vector(x), None) => Activation::Vector(softmax(&x)?),
            _ => {
                return Err(IntegrityError::ShapeMismatch(format!(
                    "layer {index} ({layer}) received mismatched activation or weights"
                ))
                .into())
            }
        };
        layer_macs.push(counter.0);
    }

    match act {
        Activation::Vector(probabilities) => Ok(ForwardTrace {
            probabilities,
            layer_macs,
        }),
        Activation::Map(_) => unreachable!("validated spec ends in a vector"),
    }
}

/// Highest-probability label; ties resolve to the lowest index.
pub fn classify<'a>(probabilities: &[f32], labels: &'a [String]) -> Result<(&'a str, f32)> {
    if probabilities.is_empty() {
        return Err(Error::contract(
            "cannot classify an empty probability vector",
        ));
    }
    if probabilities.len() != labels.len() {
        return Err(Error::contract(format!(
            "{} probabilities but {} labels",
            probabilities.len(),
            labels.len()
        )));
    }
    let mut best = 0;
    for (i, &p) in probabilities.iter().enumerate().skip(1) {
        if p > probabilities[best] {
            best = i;
        }
    }
    Ok((labels[best].as_str(), probabilities[best]))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    fn convs(spec: &NetworkSpec) -> Vec<(usize, usize, usize)> {
        spec.layers
            .iter()
            .filter_map(|l| match *l {
                LayerSpec::Conv {
                    kernel_h,
                    stride,
                    out_channels,
                    ..
                } => Some((kernel_h, stride, out_channels)),
                _ => None,
            })
            .collect()
    }

    #[test]
    fn cnp_preset_layout() {
        let spec = build_preset("cnn-cnp").unwrap();
        let c = convs(&spec);
        assert_eq!(c.len(), 7);
        assert_eq!(
            c.iter().map(|c| c.1).collect::<Vec<_>>(),
            [1, 2, 1, 2, 1, 1, 1]
        );
        assert_eq!(
            c.iter().map(|c| c.2).collect::<Vec<_>>(),
            [64, 64, 128, 128, 128, 128, 28]
        );
        assert!(!spec
            .layers
            .iter()
            .any(|l| matches!(l, LayerSpec::MaxPool { .. })));
        assert_eq!(
            &spec.layers[7..],
            &[LayerSpec::GlobalAvgPool, LayerSpec::Softmax]
        );
    }

    #[test]
    fn c_preset_layout() {
        let spec = build_preset("cnn-c").unwrap();
        let c = convs(&spec);
        assert_eq!(c.len(), 7);
        assert!(c.iter().all(|c| c.1 == 1));
        assert_eq!(spec.layers[2], LayerSpec::maxpool(2, 2));
        assert_eq!(spec.layers[5], LayerSpec::maxpool(2, 2));
    }

    #[test]
    fn fc_preset_layout() {
        let spec = build_preset("cnn-fc").unwrap();
        assert_eq!(convs(&spec).len(), 4);
        assert_eq!(spec.layers[2], LayerSpec::maxpool(1, 2));
        assert_eq!(spec.layers[5], LayerSpec::maxpool(2, 2));
        let fcs: Vec<_> = spec
            .layers
            .iter()
            .filter_map(|l| match l {
                LayerSpec::Dense { out_features } => Some(*out_features),
                _ => None,
            })
            .collect();
        assert_eq!(fcs, [1024, 1024, 28]);
        spec.validate().unwrap();
    }

    #[test]
    fn unknown_preset() {
        assert!(matches!(
            build_preset("bogus"),
            Err(Error::UnknownPreset(_))
        ));
        assert!(matches!(
            build_preset("custom"),
            Err(Error::UnknownPreset(_))
        ));
    }

    #[test]
    fn cnp_shape_chain() {
        let shapes = build_preset("cnn-cnp").unwrap().infer_shapes().unwrap();
        let m = |h, w, c| LayerShape::Map(Shape3::new(h, w, c));
        assert_eq!(
            shapes,
            [
                m(400, 64, 64),
                m(200, 32, 64),
                m(200, 32, 128),
                m(100, 16, 128),
                m(100, 16, 128),
                m(100, 16, 128),
                m(100, 16, 28),
                LayerShape::Vector(28),
                LayerShape::Vector(28),
            ]
        );
    }

    #[test]
    fn c_shape_after_second_pool() {
        let shapes = build_preset("cnn-c").unwrap().infer_shapes().unwrap();
        assert_eq!(shapes[5], LayerShape::Map(Shape3::new(100, 16, 128)));
    }

    #[test]
    fn exhausted_map_is_a_shape_error() {
        let spec = NetworkSpec {
            arch: Arch::Custom,
            input_shape: Shape3::new(8, 8, 1),
            layers: vec![LayerSpec::conv(3, 2, 4); 5],
            num_classes: 4,
        };
        match spec.infer_shapes() {
            Err(Error::Shape { index, reason, .. }) => {
                assert_eq!(index, 3);
                assert!(reason.contains("underflow"));
            }
            other => panic!("expected shape error, got {other:?}"),
        }
    }

    #[test]
    fn validate_requires_softmax_and_class_count() {
        let mut spec = build_preset("cnn-cnp").unwrap();
        spec.num_classes = 10;
        assert!(spec.validate().is_err());
        let mut spec = build_preset("cnn-cnp").unwrap();
        spec.layers.pop();
        assert!(spec.validate().is_err());
    }

    #[test]
    fn classify_cases() {
        let l = labels(&["a", "b", "c"]);
        assert_eq!(classify(&[0.1, 0.7, 0.2], &l).unwrap(), ("b", 0.7));
        assert_eq!(classify(&[1.0 / 3.0; 3], &l).unwrap().0, "a");
        assert_eq!(classify(&[0.0, 0.0, 1.0], &l).unwrap(), ("c", 1.0));
        assert!(classify(&[], &[]).is_err());
        assert!(classify(&[0.5, 0.5], &l).is_err());
    }

    #[test]
    fn weights_check_detects_mismatch() {
        let spec = build_preset("cnn-cnp").unwrap();
        let other = NetworkSpec::preset_with_classes(Arch::CnnCnp, 6).unwrap();
        let w = ModelWeights::zeros(&other).unwrap();
        assert!(matches!(
            w.check(&spec),
            Err(Error::Integrity(IntegrityError::ShapeMismatch(_)))
        ));
        assert_eq!(
            ModelWeights::zeros(&spec).unwrap().param_count(),
            spec.weight_count().unwrap()
        );
    }

    #[test]
    fn seeded_weights_are_reproducible_and_bounded() {
        let spec = NetworkSpec::preset_with_classes(Arch::CnnCnp, 6).unwrap();
        let a = ModelWeights::seeded_uniform(&spec, 7).unwrap();
        let b = ModelWeights::seeded_uniform(&spec, 7).unwrap();
        let c = ModelWeights::seeded_uniform(&spec, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        for layer in a.layers() {
            let bound = 1.0 / (layer.shape().fan_in() as f32).sqrt();
            assert!(layer.values().all(|v| v.abs() <= bound));
        }
    }
}
