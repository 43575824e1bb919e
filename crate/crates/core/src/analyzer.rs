//! Static cost model: parameters, multiply-accumulates, 16-bit weight memory
//! and real-time feasibility for a [`NetworkSpec`].
//!
//! Conventions:
//! * conv params `(kh*kw*in + 1) * out`, MACs `out_h*out_w*out * kh*kw*in` (bias adds not counted);
//! * dense params `(in + 1) * out`, and the MAC column repeats that bias-inclusive figure;
//! * pooling, flatten and the softmax activation are free.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frontend::{build_mel_filterbank, FrontendConfig};
use crate::graph::{Arch, LayerShape, LayerSpec, NetworkSpec};

/// Front-end cost figures carried verbatim from the reference table.
pub const PAPER_FRONTEND_PARAMS: u64 = 25_600;
pub const PAPER_FRONTEND_MACS: u64 = 12_700_000;

/// Default compute budget of the target microcontrollers, in MMAC/s.
pub const DEFAULT_BUDGET_MMACS: f64 = 430.0;
pub const DEFAULT_WINDOW_S: f64 = 4.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FrontendMode {
    /// Fixed 25.6 k params / 12.7 M MACs row, for table parity.
    PaperConstants,
    /// Derived from the front-end geometry; not comparable to the reference table.
    Computed,
}

impl FrontendMode {
    pub fn name(&self) -> &'static str {
        match self {
            FrontendMode::PaperConstants => "paper-constants",
            FrontendMode::Computed => "computed",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostRow {
    pub layer: String,
    pub params: u64,
    pub macs: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Totals {
    pub total_params: u64,
    pub total_macs: u64,
}

impl Totals {
    /// Totals row of the fully-connected reference column (233 M params, 2555 M MACs).
    pub const REFERENCE_CNN_FC: Totals = Totals {
        total_params: 233_000_000,
        total_macs: 2_555_000_000,
    };
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostReport {
    pub arch: Arch,
    pub frontend_mode: FrontendMode,
    pub rows: Vec<CostRow>,
    pub totals: Totals,
    #[serde(rename = "weight_bytes")]
    pub weight_bytes_16bit: u64,
}

impl CostReport {
    pub fn from_rows(arch: Arch, frontend_mode: FrontendMode, rows: Vec<CostRow>) -> Self {
        let totals = Totals {
            total_params: rows.iter().map(|r| r.params).sum(),
            total_macs: rows.iter().map(|r| r.macs).sum(),
        };
        CostReport {
            arch,
            frontend_mode,
            rows,
            totals,
            weight_bytes_16bit: 2 * totals.total_params,
        }
    }

    pub fn total_params(&self) -> u64 {
        self.totals.total_params
    }

    pub fn total_macs(&self) -> u64 {
        self.totals.total_macs
    }

    /// Aligned text table in the layout of the reference cost table.
    pub fn render_table(&self) -> String {
        let width = self
            .rows
            .iter()
            .map(|r| r.layer.len())
            .max()
            .unwrap_or(0)
            .max("Layer type".len());
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{} ({} front end)",
            self.arch,
            self.frontend_mode.name()
        );
        let _ = writeln!(
            out,
            "{:<width$}  {:>10}  {:>10}",
            "Layer type", "# param.", "# MAC"
        );
        let rule = "-".repeat(width + 24);
        let _ = writeln!(out, "{rule}");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<width$}  {:>10}  {:>10}",
                r.layer,
                format_layer_count(r.params),
                format_layer_count(r.macs)
            );
        }
        let _ = writeln!(out, "{rule}");
        let _ = writeln!(
            out,
            "{:<width$}  {:>10}  {:>10}",
            "Total:",
            format_total_count(self.totals.total_params),
            format_total_count(self.totals.total_macs)
        );
        let _ = writeln!(
            out,
            "16-bit weight memory: {} bytes (approx. {})",
            self.weight_bytes_16bit,
            format_bytes(self.weight_bytes_16bit)
        );
        out
    }

    /// CSV with a `layer,params,macs` header and a closing `total` row.
    pub fn render_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let rows = self
            .rows
            .iter()
            .map(|r| (r.layer.as_str(), r.params, r.macs))
            .chain(std::iter::once((
                "total",
                self.totals.total_params,
                self.totals.total_macs,
            )));
        w.write_record(["layer", "params", "macs"])
            .expect("in-memory csv");
        for (layer, params, macs) in rows {
            w.write_record([layer.to_string(), params.to_string(), macs.to_string()])
                .expect("in-memory csv");
        }
        String::from_utf8(w.into_inner().expect("in-memory csv")).expect("csv is utf-8")
    }
}

pub fn count_params(layer: &LayerSpec, input: LayerShape) -> Result<u64> {
    Ok(match (*layer, input) {
        (
            LayerSpec::Conv {
                kernel_h,
                kernel_w,
                out_channels,
                ..
            },
            LayerShape::Map(s),
        ) => ((kernel_h * kernel_w * s.channels + 1) * out_channels) as u64,
        (LayerSpec::Dense { out_features }, LayerShape::Vector(n)) => {
            ((n + 1) * out_features) as u64
        }
        (LayerSpec::Conv { .. } | LayerSpec::Dense { .. }, _) => {
            return Err(mismatch(layer, input))
        }
        _ => 0,
    })
}

pub fn count_macs(layer: &LayerSpec, input: LayerShape) -> Result<u64> {
    Ok(match (*layer, input) {
        (
            LayerSpec::Conv {
                kernel_h,
                kernel_w,
                stride,
                out_channels,
            },
            LayerShape::Map(s),
        ) => {
            let out_h = s.height.div_ceil(stride) as u64;
            let out_w = s.width.div_ceil(stride) as u64;
            out_h * out_w * out_channels as u64 * (kernel_h * kernel_w * s.channels) as u64
        }
        (LayerSpec::Dense { .. }, LayerShape::Vector(_)) => count_params(layer, input)?,
        (LayerSpec::Conv { .. } | LayerSpec::Dense { .. }, _) => {
            return Err(mismatch(layer, input))
        }
        _ => 0,
    })
}

fn mismatch(layer: &LayerSpec, input: LayerShape) -> Error {
    Error::contract(format!("{layer} cannot consume input {input}"))
}

/// Front-end row under the `computed` convention: params are filterbank
/// non-zeros plus the window taps; MACs per frame are the windowing, a
/// radix-2 FFT at 4 real MACs per butterfly and the filterbank product.
pub fn computed_frontend_cost(cfg: &FrontendConfig) -> Result<CostRow> {
    let fb = build_mel_filterbank(cfg)?;
    let nonzeros = fb.nonzeros() as u64;
    let window = cfg.window_samples() as u64;
    let n = cfg.fft_size as u64;
    let butterflies = n / 2 * n.trailing_zeros() as u64;
    let per_frame = window + 4 * butterflies + nonzeros;
    Ok(CostRow {
        layer: "frontend".into(),
        params: nonzeros + window,
        macs: per_frame * cfg.num_frames as u64,
    })
}

pub fn analyze(spec: &NetworkSpec, mode: FrontendMode) -> Result<CostReport> {
    analyze_with_frontend(spec, mode, &FrontendConfig::default())
}

pub fn analyze_with_frontend(
    spec: &NetworkSpec,
    mode: FrontendMode,
    frontend: &FrontendConfig,
) -> Result<CostReport> {
    let inputs = spec.input_shapes()?;
    let mut rows = vec![CostRow {
        layer: "input".into(),
        params: 0,
        macs: 0,
    }];
    rows.push(match mode {
        FrontendMode::PaperConstants => CostRow {
            layer: "frontend".into(),
            params: PAPER_FRONTEND_PARAMS,
            macs: PAPER_FRONTEND_MACS,
        },
        FrontendMode::Computed => computed_frontend_cost(frontend)?,
    });
    for (layer, input) in spec.layers.iter().zip(inputs) {
        rows.push(CostRow {
            layer: layer.table_name(),
            params: count_params(layer, input)?,
            macs: count_macs(layer, input)?,
        });
    }
    Ok(CostReport::from_rows(spec.arch, mode, rows))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReductionFactors {
    pub param_factor: f64,
    pub mac_factor: f64,
}

/// `a / b` for both totals.
pub fn reduction_factors(a: &Totals, b: &Totals) -> Result<ReductionFactors> {
    if b.total_params == 0 || b.total_macs == 0 {
        return Err(Error::contract("reduction factor against a zero total"));
    }
    Ok(ReductionFactors {
        param_factor: a.total_params as f64 / b.total_params as f64,
        mac_factor: a.total_macs as f64 / b.total_macs as f64,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RealtimeVerdict {
    pub budget_mmacs_per_s: f64,
    pub window_s: f64,
    pub compute_time_s: f64,
    pub feasible: bool,
    pub realtime_factor: f64,
}

/// Models the time to run `total_macs` at a fixed MAC rate and compares it to the window length.
pub fn realtime_check(
    total_macs: u64,
    budget_mmacs_per_s: f64,
    window_s: f64,
) -> Result<RealtimeVerdict> {
    if budget_mmacs_per_s.is_nan() || budget_mmacs_per_s <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "MAC budget must be positive, got {budget_mmacs_per_s}"
        )));
    }
    if !(window_s.is_finite() && window_s > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "window must be positive, got {window_s}"
        )));
    }
    let compute_time_s = total_macs as f64 / (budget_mmacs_per_s * 1e6);
    Ok(RealtimeVerdict {
        budget_mmacs_per_s,
        window_s,
        compute_time_s,
        feasible: compute_time_s < window_s,
        realtime_factor: window_s / compute_time_s,
    })
}

/// Rounds `n / unit` half-up to `decimals` places using integer arithmetic.
fn scaled(n: u64, unit: u64, decimals: u32) -> String {
    let step = unit / 10u64.pow(decimals);
    let q = (n as u128 + step as u128 / 2) / step as u128;
    if decimals == 0 {
        q.to_string()
    } else {
        let p = 10u128.pow(decimals);
        format!("{}.{:0width$}", q / p, q % p, width = decimals as usize)
    }
}

/// Per-layer display: plain below 1000, otherwise one decimal with a `k`/`M` suffix.
pub fn format_layer_count(n: u64) -> String {
    match n {
        0..=999 => n.to_string(),
        1_000..=999_999 => format!("{} k", scaled(n, 1_000, 1)),
        _ => format!("{} M", scaled(n, 1_000_000, 1)),
    }
}

/// Totals display: whole `k`/`M` units.
pub fn format_total_count(n: u64) -> String {
    match n {
        0..=999 => n.to_string(),
        1_000..=999_999 => format!("{} k", scaled(n, 1_000, 0)),
        _ => format!("{} M", scaled(n, 1_000_000, 0)),
    }
}

/// Decimal kilobytes/megabytes, truncated to whole units (what fully fits).
pub fn format_bytes(n: u64) -> String {
    match n {
        0..=999 => format!("{n} B"),
        1_000..=999_999 => format!("{} kB", n / 1_000),
        _ => format!("{} MB", n / 1_000_000),
    }
}
