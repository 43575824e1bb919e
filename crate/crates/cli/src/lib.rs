//! Command-line front end: cost analysis, model generation, feature extraction and
//! sliding-window inference for the audio event CNN presets.
//!
//! Exit codes: 0 ok, 1 internal error, 2 usage, 3 input audio, 4 model integrity, 5 I/O.

use std::ffi::OsString;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use aedcnn_core::analyzer::{
    analyze, realtime_check, CostReport, FrontendMode, RealtimeVerdict, DEFAULT_BUDGET_MMACS,
    DEFAULT_WINDOW_S,
};
use aedcnn_core::frontend::{mels, wav, Frontend};
use aedcnn_core::graph::forward_traced;
use aedcnn_core::model_io::{default_labels, load_model, save_model, Model};
use aedcnn_core::{
    classify, forward, Arch, Error, FrontendConfig, ModelWeights, NetworkSpec, Tensor,
};

const EXIT_INTERNAL: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_INPUT: u8 = 3;
const EXIT_INTEGRITY: u8 = 4;
const EXIT_IO: u8 = 5;

#[derive(Parser, Debug)]
#[command(
    name = "aedcnn",
    version,
    about = "Audio event CNN runtime and cost analyzer"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Per-layer parameter and MAC counts for a preset.
    Analyze {
        #[arg(long, value_parser = parse_arch)]
        arch: Arch,
        #[arg(long, value_enum, default_value_t = ReportFormat::Table)]
        format: ReportFormat,
        #[arg(long, value_enum, default_value_t = FrontendArg::PaperConstants)]
        frontend_mode: FrontendArg,
    },
    /// Classifies a WAV file window by window.
    Infer {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        wav: PathBuf,
        /// Advance between consecutive windows, in seconds.
        #[arg(long, default_value_t = 1.0, value_parser = parse_positive)]
        hop_s: f64,
        #[arg(long, value_enum, default_value_t = ReportFormat::Table)]
        format: ReportFormat,
    },
    /// Modeled real-time verdict plus a measured forward pass on this machine.
    Bench {
        #[arg(long, value_parser = parse_arch)]
        arch: Arch,
        #[arg(long, env = "AEDCNN_BUDGET_MMACS", default_value_t = DEFAULT_BUDGET_MMACS, value_parser = parse_positive)]
        budget_mmacs: f64,
        #[arg(long, default_value_t = DEFAULT_WINDOW_S, value_parser = parse_positive)]
        window_s: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Skip the wall-clock forward pass.
        #[arg(long)]
        no_measure: bool,
        #[arg(long, value_enum, default_value_t = BenchFormat::Table)]
        format: BenchFormat,
    },
    /// Writes a model file with seeded uniform weights in +-1/sqrt(fan_in).
    MakeModel {
        #[arg(long, value_parser = parse_arch)]
        arch: Arch,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        num_classes: Option<usize>,
        #[arg(long, env = "AEDCNN_SAMPLE_RATE", default_value_t = 16_000)]
        sample_rate: u32,
    },
    /// Dumps the log-mel features of the first analysis window.
    Frontend {
        #[arg(long)]
        wav: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = DumpFormat::Mels)]
        format: DumpFormat,
        /// Expected input sample rate.
        #[arg(long, env = "AEDCNN_SAMPLE_RATE", default_value_t = 16_000)]
        sample_rate: u32,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ReportFormat {
    Table,
    Json,
    Csv,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum BenchFormat {
    Table,
    Json,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum DumpFormat {
    Mels,
    Csv,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FrontendArg {
    PaperConstants,
    Computed,
}

impl From<FrontendArg> for FrontendMode {
    fn from(v: FrontendArg) -> Self {
        match v {
            FrontendArg::PaperConstants => FrontendMode::PaperConstants,
            FrontendArg::Computed => FrontendMode::Computed,
        }
    }
}

fn parse_arch(s: &str) -> Result<Arch, String> {
    match s.parse::<Arch>() {
        Ok(Arch::Custom) | Err(_) => Err(format!(
            "unknown architecture '{s}' (expected one of: cnn-fc, cnn-c, cnn-cnp)"
        )),
        Ok(arch) => Ok(arch),
    }
}

fn parse_positive(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 => Ok(v),
        Ok(v) => Err(format!("must be positive, got {v}")),
        Err(e) => Err(e.to_string()),
    }
}

#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(err: Error) -> Self {
        let code = match &err {
            Error::InvalidArgument(_)
            | Error::UnknownPreset(_)
            | Error::Unsupported(_)
            | Error::Shape { .. }
            | Error::DegenerateFilterbank(_) => EXIT_USAGE,
            Error::InsufficientAudio { .. } | Error::Audio(_) => EXIT_INPUT,
            Error::Integrity(_) | Error::QuantizationOverflow { .. } => EXIT_INTEGRITY,
            Error::Io { .. } => EXIT_IO,
            Error::Contract(_) => EXIT_INTERNAL,
        };
        Failure {
            code,
            message: err.to_string(),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(err: io::Error) -> Self {
        // A closed stdout (e.g. piped into `head`) is not a failure.
        let code = if err.kind() == io::ErrorKind::BrokenPipe {
            0
        } else {
            EXIT_IO
        };
        Failure {
            code,
            message: format!("writing output: {err}"),
        }
    }
}

type CliResult<T = ()> = std::result::Result<T, Failure>;

/// Parses `args` (including the program name) and runs the command, writing
/// results to `out` and diagnostics to `err`. Returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let sink: &mut dyn Write = if e.use_stderr() { err } else { out };
            let _ = write!(sink, "{}", e.render());
            return code;
        }
    };
    match dispatch(cli.command, out) {
        Ok(()) => 0,
        Err(f) if f.code == 0 => 0,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

fn dispatch(command: Command, out: &mut dyn Write) -> CliResult {
    match command {
        Command::Analyze {
            arch,
            format,
            frontend_mode,
        } => cmd_analyze(out, arch, format, frontend_mode.into()),
        Command::Infer {
            model,
            wav,
            hop_s,
            format,
        } => cmd_infer(out, &model, &wav, hop_s, format),
        Command::Bench {
            arch,
            budget_mmacs,
            window_s,
            seed,
            no_measure,
            format,
        } => cmd_bench(out, arch, budget_mmacs, window_s, seed, !no_measure, format),
        Command::MakeModel {
            arch,
            seed,
            out: path,
            num_classes,
            sample_rate,
        } => cmd_make_model(out, arch, seed, &path, num_classes, sample_rate),
        Command::Frontend {
            wav,
            out: path,
            format,
            sample_rate,
        } => cmd_frontend(out, &wav, &path, format, sample_rate),
    }
}

fn write_json(out: &mut dyn Write, value: &impl Serialize) -> CliResult {
    serde_json::to_writer_pretty(&mut *out, value).map_err(io::Error::from)?;
    writeln!(out)?;
    Ok(())
}

fn cmd_analyze(
    out: &mut dyn Write,
    arch: Arch,
    format: ReportFormat,
    mode: FrontendMode,
) -> CliResult {
    let report: CostReport = analyze(&NetworkSpec::preset(arch)?, mode)?;
    match format {
        ReportFormat::Table => write!(out, "{}", report.render_table())?,
        ReportFormat::Csv => write!(out, "{}", report.render_csv())?,
        ReportFormat::Json => write_json(out, &report)?,
    }
    Ok(())
}

#[derive(Serialize)]
struct InferRecord {
    start_s: f64,
    label: String,
    confidence: f32,
    probabilities: Vec<f32>,
}

#[derive(Serialize)]
struct InferReport<'a> {
    arch: Arch,
    sample_rate: u32,
    window_s: f64,
    hop_s: f64,
    labels: &'a [String],
    records: Vec<InferRecord>,
}

fn read_audio(path: &Path, expected_rate: u32) -> CliResult<Vec<f32>> {
    let audio = wav::read_wav(path)?;
    if audio.sample_rate != expected_rate {
        return Err(Failure {
            code: EXIT_INPUT,
            message: format!(
                "{}: sample rate {} Hz, expected {} Hz",
                path.display(),
                audio.sample_rate,
                expected_rate
            ),
        });
    }
    Ok(audio.samples)
}

/// Start offsets of every full window: `floor((len - window) / hop) + 1` of them.
fn window_starts(len: usize, window: usize, hop: usize) -> Vec<usize> {
    if len < window {
        return Vec::new();
    }
    (0..=(len - window) / hop).map(|i| i * hop).collect()
}

/// Runs each window through the front end and the network; results keep window order.
fn classify_windows(model: &Model, samples: &[f32], starts: &[usize]) -> CliResult<Vec<Vec<f32>>> {
    let frontend = Frontend::new(model.frontend.clone())?;
    let window = model.frontend.required_samples();
    let run_one = |start: usize| -> aedcnn_core::Result<Vec<f32>> {
        let features = frontend.process(&samples[start..start + window])?;
        forward(&model.spec, &model.weights, &features)
    };
    let threads = std::thread::available_parallelism()
        .map_or(1, |n| n.get())
        .min(starts.len())
        .max(1);
    let chunk = starts.len().div_ceil(threads).max(1);
    let results: Vec<aedcnn_core::Result<Vec<Vec<f32>>>> = std::thread::scope(|s| {
        let handles: Vec<_> = starts
            .chunks(chunk)
            .map(|part| s.spawn(|| part.iter().map(|&st| run_one(st)).collect()))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("inference worker panicked"))
            .collect()
    });
    let mut probabilities = Vec::with_capacity(starts.len());
    for part in results {
        probabilities.extend(part?);
    }
    Ok(probabilities)
}

fn cmd_infer(
    out: &mut dyn Write,
    model_path: &Path,
    wav_path: &Path,
    hop_s: f64,
    format: ReportFormat,
) -> CliResult {
    let model = load_model(model_path)?;
    let rate = model.frontend.sample_rate;
    let samples = read_audio(wav_path, rate)?;
    let window = model.frontend.required_samples();
    let window_s = window as f64 / rate as f64;
    if samples.len() < window {
        return Err(Error::InsufficientAudio {
            required: window,
            actual: samples.len(),
            seconds: window_s,
        }
        .into());
    }
    let hop = (hop_s * rate as f64).round() as usize;
    if hop == 0 {
        return Err(Failure {
            code: EXIT_USAGE,
            message: format!("hop of {hop_s} s is shorter than one sample at {rate} Hz"),
        });
    }
    let starts = window_starts(samples.len(), window, hop);
    let probabilities = classify_windows(&model, &samples, &starts)?;
    let mut records = Vec::with_capacity(starts.len());
    for (&start, probs) in starts.iter().zip(probabilities) {
        let (label, confidence) = classify(&probs, &model.labels)?;
        records.push(InferRecord {
            start_s: start as f64 / rate as f64,
            label: label.to_string(),
            confidence,
            probabilities: probs,
        });
    }

    match format {
        ReportFormat::Json => write_json(
            out,
            &InferReport {
                arch: model.spec.arch,
                sample_rate: rate,
                window_s,
                hop_s,
                labels: &model.labels,
                records,
            },
        )?,
        ReportFormat::Csv => {
            writeln!(out, "start_s,label,confidence")?;
            for r in &records {
                writeln!(out, "{},{},{}", r.start_s, r.label, r.confidence)?;
            }
        }
        ReportFormat::Table => {
            writeln!(
                out,
                "{:>9}  {:<20}  {:>10}",
                "start (s)", "label", "confidence"
            )?;
            for r in &records {
                writeln!(
                    out,
                    "{:>9.3}  {:<20}  {:>10.4}",
                    r.start_s, r.label, r.confidence
                )?;
            }
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct Modeled {
    total_macs: u64,
    #[serde(flatten)]
    verdict: RealtimeVerdict,
}

/// Wall-clock figures from this machine; not deterministic.
#[derive(Serialize)]
struct Measured {
    forward_wall_clock_s: f64,
    executed_macs: u64,
    effective_mmacs_per_s: f64,
}

#[derive(Serialize)]
struct BenchReport {
    arch: Arch,
    modeled: Modeled,
    measured: Option<Measured>,
}

fn measure_forward(spec: &NetworkSpec, seed: u64) -> CliResult<Measured> {
    let weights = ModelWeights::seeded_uniform(spec, seed)?;
    let s = spec.input_shape;
    let input = Tensor::from_fn(s.height, s.width, s.channels, |y, x, c| {
        ((y * 31 + x * 17 + c * 7) % 97) as f32 / 97.0 - 0.5
    })?;
    let start = Instant::now();
    let trace = forward_traced(spec, &weights, &input)?;
    let elapsed = start.elapsed().as_secs_f64();
    let executed_macs: u64 = trace.layer_macs.iter().sum();
    Ok(Measured {
        forward_wall_clock_s: elapsed,
        executed_macs,
        effective_mmacs_per_s: executed_macs as f64 / elapsed.max(f64::MIN_POSITIVE) / 1e6,
    })
}

fn cmd_bench(
    out: &mut dyn Write,
    arch: Arch,
    budget_mmacs: f64,
    window_s: f64,
    seed: u64,
    measure: bool,
    format: BenchFormat,
) -> CliResult {
    let spec = NetworkSpec::preset(arch)?;
    let report = analyze(&spec, FrontendMode::PaperConstants)?;
    let total_macs = report.total_macs();
    let verdict = realtime_check(total_macs, budget_mmacs, window_s)?;
    let measured = if measure {
        Some(measure_forward(&spec, seed)?)
    } else {
        None
    };
    match format {
        BenchFormat::Json => write_json(
            out,
            &BenchReport {
                arch,
                modeled: Modeled {
                    total_macs,
                    verdict,
                },
                measured,
            },
        )?,
        BenchFormat::Table => {
            writeln!(out, "{arch}")?;
            writeln!(
                out,
                "modeled (budget {} MMAC/s, window {} s):",
                verdict.budget_mmacs_per_s, verdict.window_s
            )?;
            writeln!(out, "  total MACs:       {total_macs}")?;
            writeln!(out, "  compute time:     {:.2} s", verdict.compute_time_s)?;
            writeln!(out, "  feasible:         {}", verdict.feasible)?;
            writeln!(out, "  real-time factor: {:.2}", verdict.realtime_factor)?;
            if let Some(m) = measured {
                writeln!(
                    out,
                    "measured on this machine (wall clock, varies run to run):"
                )?;
                writeln!(out, "  forward pass:     {:.3} s", m.forward_wall_clock_s)?;
                writeln!(out, "  executed MACs:    {}", m.executed_macs)?;
                writeln!(
                    out,
                    "  effective rate:   {:.1} MMAC/s",
                    m.effective_mmacs_per_s
                )?;
            }
        }
    }
    Ok(())
}

fn cmd_make_model(
    out: &mut dyn Write,
    arch: Arch,
    seed: u64,
    path: &Path,
    num_classes: Option<usize>,
    sample_rate: u32,
) -> CliResult {
    let spec = match num_classes {
        Some(n) => NetworkSpec::preset_with_classes(arch, n)?,
        None => NetworkSpec::preset(arch)?,
    };
    let frontend = FrontendConfig::for_sample_rate(sample_rate);
    frontend.validate()?;
    let weights = ModelWeights::seeded_uniform(&spec, seed)?;
    save_model(
        &spec,
        &weights,
        &frontend,
        &default_labels(spec.num_classes),
        path,
    )?;
    writeln!(
        out,
        "wrote {} ({arch}, seed {seed}, {} weights)",
        path.display(),
        weights.param_count()
    )?;
    Ok(())
}

fn cmd_frontend(
    out: &mut dyn Write,
    wav_path: &Path,
    path: &Path,
    format: DumpFormat,
    sample_rate: u32,
) -> CliResult {
    let cfg = FrontendConfig::for_sample_rate(sample_rate);
    let samples = read_audio(wav_path, sample_rate)?;
    let features = Frontend::new(cfg)?.process(&samples)?;
    match format {
        DumpFormat::Mels => mels::save_mels(path, &features)?,
        DumpFormat::Csv => {
            let file = std::fs::File::create(path).map_err(|e| Failure {
                code: EXIT_IO,
                message: format!("{}: {e}", path.display()),
            })?;
            mels::write_mels_csv(io::BufWriter::new(file), &features)?;
        }
    }
    writeln!(
        out,
        "wrote {} ({} frames x {} mels)",
        path.display(),
        features.height(),
        features.width()
    )?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_counts() {
        assert_eq!(window_starts(64_000, 64_000, 16_000), vec![0]);
        assert_eq!(window_starts(160_000, 64_000, 16_000).len(), 7);
        assert!(window_starts(32_000, 64_000, 16_000).is_empty());
        assert_eq!(window_starts(64_000 + 15_999, 64_000, 16_000).len(), 1);
    }

    #[test]
    fn arch_parsing_rejects_custom() {
        assert!(parse_arch("cnn-cnp").is_ok());
        assert!(parse_arch("custom").is_err());
        assert!(parse_arch("bogus").is_err());
    }

    #[test]
    fn positive_parsing() {
        assert_eq!(parse_positive("430").unwrap(), 430.0);
        assert!(parse_positive("0").is_err());
        assert!(parse_positive("-1").is_err());
        assert!(parse_positive("nan").is_err());
        assert!(parse_positive("x").is_err());
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
