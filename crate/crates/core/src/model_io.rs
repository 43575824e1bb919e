//! `AEDM` model container: network description, front-end settings, labels
//! and binary16 weights, closed by a CRC32.
//!
//! All integers and floats are little-endian. See `docs/aedm-format.md` for
//! an annotated dump.
//!
//! ```text
//! magic        4   "AEDM"
//! version      u16 1
//! frontend     56  sample_rate u32, window_ms f64, hop_ms f64, fft_size u32,
//!                  num_mels u32, num_frames u32, fmin f64, fmax f64, log_epsilon f64
//! network      arch u8, input h/w/c u32 x3, num_classes u32, layer_count u32,
//!              then per layer: kind u8 + payload
//!                0 conv     kernel_h u8, kernel_w u8, stride u8, out_channels u32
//!                1 maxpool  pool_h u8, pool_w u8
//!                2 avgpool  -
//!                3 dense    out_features u32
//!                4 flatten  -
//!                5 softmax  -
//! labels       count u32, then per label: byte length u16 + UTF-8
//! weights      value count u64, then f16 values; per weighted layer the
//!              weights in storage order followed by the biases
//! crc32        u32 over every preceding byte
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use half::f16;

use crate::error::{Error, IntegrityError, Result};
use crate::frontend::FrontendConfig;
use crate::graph::{Arch, LayerSpec, ModelWeights, NetworkSpec};
use crate::tensor::Shape3;

pub const AEDM_MAGIC: [u8; 4] = *b"AEDM";
pub const AEDM_VERSION: u16 = 1;

/// Everything a model file carries.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub spec: NetworkSpec,
    pub weights: ModelWeights,
    pub frontend: FrontendConfig,
    pub labels: Vec<String>,
}

/// Round-to-nearest-even conversion to binary16.
pub fn quantize_weights(values: &[f32], layer: &str) -> Result<Vec<f16>> {
    values
        .iter()
        .map(|&v| {
            if !v.is_finite() || v.abs() > f16::MAX.to_f32() {
                Err(Error::QuantizationOverflow {
                    layer: layer.to_string(),
                    value: v,
                })
            } else {
                Ok(f16::from_f32(v))
            }
        })
        .collect()
}

pub fn dequantize_weights(values: &[f16]) -> Vec<f32> {
    values.iter().map(|v| v.to_f32()).collect()
}

fn weighted_layer_names(spec: &NetworkSpec) -> impl Iterator<Item = String> + '_ {
    spec.layers
        .iter()
        .enumerate()
        .filter(|(_, l)| l.has_weights())
        .map(|(i, l)| format!("#{i} {l}"))
}

/// The weights as they will be after a save/load cycle.
pub fn quantize_roundtrip(spec: &NetworkSpec, weights: &ModelWeights) -> Result<ModelWeights> {
    weights.check(spec)?;
    let layers = weights
        .layers()
        .iter()
        .zip(weighted_layer_names(spec))
        .map(|(layer, name)| {
            let values: Vec<f32> = layer.values().collect();
            let restored = dequantize_weights(&quantize_weights(&values, &name)?);
            layer.shape().build(restored)
        })
        .collect::<Result<_>>()?;
    Ok(ModelWeights::new(layers))
}

fn arch_tag(arch: Arch) -> u8 {
    match arch {
        Arch::Custom => 0,
        Arch::CnnFc => 1,
        Arch::CnnC => 2,
        Arch::CnnCnp => 3,
    }
}

fn to_u8(v: usize, what: &str) -> Result<u8> {
    u8::try_from(v).map_err(|_| Error::contract(format!("{what} {v} does not fit in a byte")))
}

fn to_u32(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::contract(format!("{what} {v} does not fit in u32")))
}

pub fn encode_model(model: &Model) -> Result<Vec<u8>> {
    let Model {
        spec,
        weights,
        frontend,
        labels,
    } = model;
    spec.validate()?;
    weights.check(spec)?;
    frontend.validate()?;
    if labels.len() != spec.num_classes {
        return Err(Error::contract(format!(
            "{} labels for {} classes",
            labels.len(),
            spec.num_classes
        )));
    }

    let mut buf = Vec::with_capacity(256 + 2 * weights.param_count());
    buf.extend_from_slice(&AEDM_MAGIC);
    buf.extend_from_slice(&AEDM_VERSION.to_le_bytes());

    buf.extend_from_slice(&frontend.sample_rate.to_le_bytes());
    buf.extend_from_slice(&frontend.window_ms.to_le_bytes());
    buf.extend_from_slice(&frontend.hop_ms.to_le_bytes());
    buf.extend_from_slice(&to_u32(frontend.fft_size, "fft_size")?.to_le_bytes());
    buf.extend_from_slice(&to_u32(frontend.num_mels, "num_mels")?.to_le_bytes());
    buf.extend_from_slice(&to_u32(frontend.num_frames, "num_frames")?.to_le_bytes());
    buf.extend_from_slice(&frontend.fmin.to_le_bytes());
    buf.extend_from_slice(&frontend.fmax.to_le_bytes());
    buf.extend_from_slice(&frontend.log_epsilon.to_le_bytes());

    buf.push(arch_tag(spec.arch));
    let Shape3 {
        height,
        width,
        channels,
    } = spec.input_shape;
    for v in [height, width, channels, spec.num_classes, spec.layers.len()] {
        buf.extend_from_slice(&to_u32(v, "network field")?.to_le_bytes());
    }
    for layer in &spec.layers {
        match *layer {
            LayerSpec::Conv {
                kernel_h,
                kernel_w,
                stride,
                out_channels,
            } => {
                buf.push(0);
                buf.push(to_u8(kernel_h, "kernel")?);
                buf.push(to_u8(kernel_w, "kernel")?);
                buf.push(to_u8(stride, "stride")?);
                buf.extend_from_slice(&to_u32(out_channels, "out_channels")?.to_le_bytes());
            }
            LayerSpec::MaxPool { pool_h, pool_w } => {
                buf.push(1);
                buf.push(to_u8(pool_h, "pool")?);
                buf.push(to_u8(pool_w, "pool")?);
            }
            LayerSpec::GlobalAvgPool => buf.push(2),
            LayerSpec::Dense { out_features } => {
                buf.push(3);
                buf.extend_from_slice(&to_u32(out_features, "out_features")?.to_le_bytes());
            }
            LayerSpec::Flatten => buf.push(4),
            LayerSpec::Softmax => buf.push(5),
        }
    }

    buf.extend_from_slice(&to_u32(labels.len(), "label count")?.to_le_bytes());
    for label in labels {
        let len = u16::try_from(label.len())
            .map_err(|_| Error::contract(format!("label of {} bytes is too long", label.len())))?;
        buf.extend_from_slice(&len.to_le_bytes());
        buf.extend_from_slice(label.as_bytes());
    }

    buf.extend_from_slice(&(weights.param_count() as u64).to_le_bytes());
    for (layer, name) in weights.layers().iter().zip(weighted_layer_names(spec)) {
        let values: Vec<f32> = layer.values().collect();
        for h in quantize_weights(&values, &name)? {
            buf.extend_from_slice(&h.to_le_bytes());
        }
    }

    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    Ok(buf)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    section: &'static str,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(self.malformed(format!("needs {n} more bytes at offset {}", self.pos))),
        }
    }

    fn malformed(&self, reason: String) -> Error {
        IntegrityError::Malformed {
            section: self.section,
            reason,
        }
        .into()
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn usize(&mut self) -> Result<usize> {
        Ok(self.u32()? as usize)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode_model(bytes: &[u8]) -> Result<Model> {
    if bytes.len() < AEDM_MAGIC.len() + 2 + 4 {
        return Err(IntegrityError::Truncated(bytes.len()).into());
    }
    if bytes[..4] != AEDM_MAGIC {
        return Err(IntegrityError::BadMagic {
            expected: AEDM_MAGIC,
            found: bytes[..4].to_vec(),
        }
        .into());
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != AEDM_VERSION {
        return Err(IntegrityError::UnsupportedVersion(version).into());
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().unwrap());
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(IntegrityError::CrcMismatch { stored, computed }.into());
    }

    let mut cur = Cursor {
        bytes: body,
        pos: 6,
        section: "frontend",
    };
    let frontend = FrontendConfig {
        sample_rate: cur.u32()?,
        window_ms: cur.f64()?,
        hop_ms: cur.f64()?,
        fft_size: cur.usize()?,
        num_mels: cur.usize()?,
        num_frames: cur.usize()?,
        fmin: cur.f64()?,
        fmax: cur.f64()?,
        log_epsilon: cur.f64()?,
    };
    frontend
        .validate()
        .map_err(|e| cur.malformed(e.to_string()))?;

    cur.section = "network";
    let arch = match cur.u8()? {
        0 => Arch::Custom,
        1 => Arch::CnnFc,
        2 => Arch::CnnC,
        3 => Arch::CnnCnp,
        t => return Err(cur.malformed(format!("unknown architecture tag {t}"))),
    };
    let input_shape = Shape3::new(cur.usize()?, cur.usize()?, cur.usize()?);
    let num_classes = cur.usize()?;
    let layer_count = cur.usize()?;
    let mut layers = Vec::with_capacity(layer_count.min(1024));
    for _ in 0..layer_count {
        layers.push(match cur.u8()? {
            0 => LayerSpec::Conv {
                kernel_h: cur.u8()? as usize,
                kernel_w: cur.u8()? as usize,
                stride: cur.u8()? as usize,
                out_channels: cur.usize()?,
            },
            1 => LayerSpec::MaxPool {
                pool_h: cur.u8()? as usize,
                pool_w: cur.u8()? as usize,
            },
            2 => LayerSpec::GlobalAvgPool,
            3 => LayerSpec::Dense {
                out_features: cur.usize()?,
            },
            4 => LayerSpec::Flatten,
            5 => LayerSpec::Softmax,
            k => return Err(cur.malformed(format!("unknown layer kind {k}"))),
        });
    }
    let spec = NetworkSpec {
        arch,
        input_shape,
        layers,
        num_classes,
    };
    spec.validate().map_err(|e| cur.malformed(e.to_string()))?;
    if input_shape != Shape3::new(frontend.num_frames, frontend.num_mels, 1) {
        return Err(cur.malformed(format!(
            "network input {input_shape} does not match the {}x{} front end",
            frontend.num_frames, frontend.num_mels
        )));
    }

    cur.section = "labels";
    let label_count = cur.usize()?;
    if label_count != num_classes {
        return Err(cur.malformed(format!("{label_count} labels for {num_classes} classes")));
    }
    let mut labels = Vec::with_capacity(label_count);
    for _ in 0..label_count {
        let len = cur.u16()? as usize;
        let raw = cur.take(len)?;
        labels.push(String::from_utf8(raw.to_vec()).map_err(|e| cur.malformed(e.to_string()))?);
    }

    cur.section = "weights";
    let shapes = spec.weight_shapes()?;
    let expected: usize = shapes.iter().map(|s| s.len()).sum();
    let count = cur.u64()?;
    if count != expected as u64 {
        return Err(IntegrityError::ShapeMismatch(format!(
            "file holds {count} weight values, spec needs {expected}"
        ))
        .into());
    }
    let mut weight_layers = Vec::with_capacity(shapes.len());
    for shape in shapes {
        let raw = cur.take(2 * shape.len())?;
        let halves: Vec<f16> = raw
            .chunks_exact(2)
            .map(|c| f16::from_le_bytes([c[0], c[1]]))
            .collect();
        weight_layers.push(shape.build(dequantize_weights(&halves))?);
    }
    if cur.pos != body.len() {
        return Err(cur.malformed(format!(
            "{} trailing bytes before the checksum",
            body.len() - cur.pos
        )));
    }

    Ok(Model {
        spec,
        weights: ModelWeights::new(weight_layers),
        frontend,
        labels,
    })
}

/// Writes the model atomically (temporary file in the same directory, then rename).
pub fn save_model(
    spec: &NetworkSpec,
    weights: &ModelWeights,
    frontend: &FrontendConfig,
    labels: &[String],
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let model = Model {
        spec: spec.clone(),
        weights: weights.clone(),
        frontend: frontend.clone(),
        labels: labels.to_vec(),
    };
    let bytes = encode_model(&model)?;
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut builder = tempfile::Builder::new();
    // Temporary files default to owner-only; the model should get the usual umask-derived mode.
    #[cfg(unix)]
    builder.permissions(std::os::unix::fs::PermissionsExt::from_mode(0o666));
    let mut tmp = builder.tempfile_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(&bytes)
        .map_err(|e| Error::io(tmp.path(), e))?;
    tmp.as_file()
        .sync_all()
        .map_err(|e| Error::io(tmp.path(), e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Model> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_model(&bytes)
}

/// Default label names `class_00`, `class_01`, ...
pub fn default_labels(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("class_{i:02}")).collect()
}
