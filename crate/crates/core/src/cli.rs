//! `evfourier` command line: ingest, inspect, synthesize, tune, train, evaluate.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::classifiers::{
    build_tiny_net, train, Architecture, InputKind, NetShape, TinyNet, TrainConfig,
};
use crate::error::{Error, Result};
use crate::events_io::{
    crop_to_roi, parse_event_file, seconds_to_us, slice_window, write_binary, write_csv, Annotations, EventFormat,
    EventStream, ParseOptions, SensorSize,
};
use crate::pipeline::{
    energy_rows, net_dataset, predict, psd_rows, report, window_rate, write_predictions_csv, Classifier, RunConfig,
    Split,
};
use crate::rate::{bin_events, RateKind};
use crate::spectral::{estimate_psd, spectrogram, PsdMethod};
use crate::synth::{generate_suite, SuiteConfig};
use crate::tuning::{tune_energy, tune_energy_band, SearchSpace, TuneMode, TuneResult};

#[derive(Debug, Parser)]
#[command(name = "evfourier", version, about = "Frequency-domain action recognition on event-camera recordings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Validate an event file and optionally convert it.
    Ingest(IngestArgs),
    /// Export the rate signal of one window.
    Rate(WindowArgs),
    /// Export the PSD of one window.
    Psd(WindowArgs),
    /// Export the spectrogram of one ROI over the whole recording.
    Spectrogram(SpectrogramArgs),
    /// Generate a synthetic multi-ROI recording with annotations.
    Synth(SynthArgs),
    /// Random-search the thresholds of the energy or energy-band classifier.
    Tune(TuneArgs),
    /// Train a tiny network.
    Train(TrainArgs),
    /// Score a classifier per ROI and dump every prediction.
    Eval(EvalArgs),
    /// Classify a single window.
    Classify(ClassifyArgs),
}

/// Window and signal options; flags override `--config`, which overrides defaults.
#[derive(Debug, Args)]
struct RunArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Window duration in seconds.
    #[arg(long)]
    window: Option<f64>,
    /// Rate bin width in seconds.
    #[arg(long)]
    bin_width: Option<f64>,
    /// Distance between window centers in seconds.
    #[arg(long)]
    stride: Option<f64>,
    /// periodogram | welch
    #[arg(long)]
    psd_method: Option<PsdMethod>,
    /// signed | unsigned | zero-mean
    #[arg(long)]
    rate_kind: Option<RateKind>,
    #[arg(long)]
    seed: Option<u64>,
    /// Leading fraction of the recording used for training.
    #[arg(long)]
    train_fraction: Option<f64>,
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
                serde_json::from_str(&text).map_err(|e| Error::Param(format!("{}: {e}", path.display())))?
            }
            None => RunConfig::default(),
        };
        if let Some(v) = self.window {
            cfg.window_d = v;
        }
        if let Some(v) = self.bin_width {
            cfg.bin_width = v;
        }
        if let Some(v) = self.stride {
            cfg.stride = v;
        }
        if let Some(v) = self.psd_method {
            cfg.psd_method = v;
        }
        if let Some(v) = self.rate_kind {
            cfg.rate_kind = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.train_fraction {
            cfg.train_fraction = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
struct DataArgs {
    /// Event file (.csv or .bin).
    #[arg(long)]
    events: PathBuf,
    /// Annotation JSON with sensor, ROIs and tracks.
    #[arg(long)]
    annotations: PathBuf,
    /// csv | binary; inferred from the extension when omitted.
    #[arg(long)]
    format: Option<EventFormat>,
}

impl DataArgs {
    fn load(&self) -> Result<(EventStream, Annotations)> {
        let annotations = Annotations::read(&self.annotations)?;
        let format = self.format.unwrap_or_else(|| EventFormat::from_path(&self.events));
        let stream = parse_event_file(&self.events, format, &annotations.parse_options())?;
        Ok((stream, annotations))
    }
}

#[derive(Debug, Args)]
struct IngestArgs {
    #[arg(long)]
    events: PathBuf,
    /// Annotation JSON supplying sensor size and span.
    #[arg(long)]
    annotations: Option<PathBuf>,
    #[arg(long)]
    format: Option<EventFormat>,
    /// Sensor width when no annotations are given.
    #[arg(long, requires = "height")]
    width: Option<u16>,
    #[arg(long, requires = "width")]
    height: Option<u16>,
    /// Tolerated timestamp regression in microseconds.
    #[arg(long)]
    reorder_tolerance_us: Option<u64>,
    /// Converted output; format from the extension.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct WindowArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    run: RunArgs,
    #[arg(long)]
    roi: String,
    /// Window center in microseconds.
    #[arg(long)]
    center_us: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SpectrogramArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    run: RunArgs,
    #[arg(long)]
    roi: String,
    /// Short-time window length in bins.
    #[arg(long, default_value_t = 500)]
    segment_len: usize,
    /// Hop between short-time windows in bins.
    #[arg(long, default_value_t = 50)]
    hop: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Output directory for events and annotations.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    freq: Option<f64>,
    /// Peak event rate of the oscillation (events/s).
    #[arg(long)]
    amplitude: Option<f64>,
    /// Background rate per polarity (events/s).
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    rois: Option<usize>,
    /// Recording length in seconds.
    #[arg(long)]
    duration: Option<f64>,
    #[arg(long)]
    distractor_freq: Option<f64>,
    #[arg(long)]
    distractor_amplitude: Option<f64>,
    /// Fraction of quiet time covered by distractor bursts.
    #[arg(long)]
    distractor_fraction: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// csv | binary
    #[arg(long, default_value = "csv")]
    format: EventFormat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ClassifierKind {
    EnergyBand,
    Energy,
    Net,
}

impl std::str::FromStr for ClassifierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "energy-band" => Ok(ClassifierKind::EnergyBand),
            "energy" => Ok(ClassifierKind::Energy),
            "net" => Ok(ClassifierKind::Net),
            other => Err(Error::Param(format!("unknown classifier '{other}'"))),
        }
    }
}

#[derive(Debug, Args)]
struct TuneArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    run: RunArgs,
    /// energy-band | energy
    #[arg(long, default_value = "energy-band")]
    classifier: ClassifierKind,
    /// global | per-roi
    #[arg(long, default_value = "global")]
    mode: TuneMode,
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    /// Threshold range for the energy classifier; defaults to [0, max training energy].
    #[arg(long, num_args = 2, value_names = ["LOW", "HIGH"])]
    energy_range: Option<Vec<f64>>,
    #[arg(long, default_value = "train")]
    split: Split,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    run: RunArgs,
    /// spectrum | rate
    #[arg(long, default_value = "spectrum")]
    input: InputKind,
    /// fc | conv1d
    #[arg(long, default_value = "fc")]
    arch: Architecture,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Early-stopping patience in epochs; 0 disables it.
    #[arg(long)]
    patience: Option<usize>,
    /// Unit class weights instead of inverse class frequency.
    #[arg(long)]
    uniform_weights: bool,
    #[arg(long, default_value = "train")]
    split: Split,
    #[arg(long)]
    out: PathBuf,
    /// Optional CSV of per-epoch training loss.
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ModelArgs {
    /// energy-band | energy | net
    #[arg(long)]
    classifier: ClassifierKind,
    /// Tuned thresholds (energy-band, energy).
    #[arg(long)]
    params: Option<PathBuf>,
    /// Trained network (net).
    #[arg(long)]
    model: Option<PathBuf>,
}

impl ModelArgs {
    fn load(&self) -> Result<Classifier> {
        let need = |p: &Option<PathBuf>, flag: &str| {
            p.clone()
                .ok_or_else(|| Error::Param(format!("--classifier requires {flag}")))
        };
        match self.classifier {
            ClassifierKind::EnergyBand | ClassifierKind::Energy => {
                let tuned = TuneResult::read(&need(&self.params, "--params")?)?;
                match self.classifier {
                    ClassifierKind::Energy => tuned.energy_params().map(|_| ())?,
                    _ => {
                        if tuned.energy_params().is_ok() {
                            return Err(Error::Contract("parameters are for the energy classifier".into()));
                        }
                    }
                }
                Ok(Classifier::Tuned(tuned))
            }
            ClassifierKind::Net => Ok(Classifier::Net(TinyNet::load(&need(&self.model, "--model")?)?)),
        }
    }
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    run: RunArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value = "test")]
    split: Split,
    /// Output directory for metrics.csv, metrics.json and predictions.csv.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ClassifyArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    run: RunArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    roi: String,
    #[arg(long)]
    center_us: u64,
}

/// Runs the command line and returns the process exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            let rendered = e.to_string();
            let first = rendered.lines().next().unwrap_or("invalid arguments");
            eprintln!("evfourier: {}", first.trim_start_matches("error: "));
            return 2;
        }
        Err(e) => {
            print!("{e}");
            return 0;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("evfourier: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Ingest(a) => ingest(a),
        Command::Rate(a) => window_export(a, false),
        Command::Psd(a) => window_export(a, true),
        Command::Spectrogram(a) => spectrogram_cmd(a),
        Command::Synth(a) => synth(a),
        Command::Tune(a) => tune(a),
        Command::Train(a) => train_cmd(a),
        Command::Eval(a) => eval(a),
        Command::Classify(a) => classify(a),
    }
}

/// Writes through a temporary sibling file and renames it into place.
fn write_atomic(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::Param(format!("{} is not a file path", path.display())))?;
    let mut tmp_name = OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    let result = (|| {
        let file = File::create(&tmp).map_err(|e| Error::file(&tmp, e))?;
        let mut w = BufWriter::new(file);
        f(&mut w)?;
        w.flush()?;
        std::fs::rename(&tmp, path).map_err(|e| Error::file(path, e))
    })();
    if result.is_err() {
        let _ = std::fs::remove_file(&tmp);
    }
    result
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))
}

fn write_events(path: &Path, stream: &EventStream) -> Result<()> {
    write_atomic(path, |w| match EventFormat::from_path(path) {
        EventFormat::Csv => write_csv(stream, w),
        EventFormat::Binary => write_binary(stream, w),
    })
}

fn roi_stream(stream: &EventStream, annotations: &Annotations, roi_id: &str) -> Result<EventStream> {
    let roi = annotations
        .roi(roi_id)
        .ok_or_else(|| Error::Param(format!("unknown roi '{roi_id}'")))?;
    crop_to_roi(stream, roi)
}

fn ingest(a: IngestArgs) -> Result<()> {
    let mut opts = match &a.annotations {
        Some(p) => Annotations::read(p)?.parse_options(),
        None => ParseOptions::default(),
    };
    if let (Some(width), Some(height)) = (a.width, a.height) {
        opts.sensor = Some(SensorSize { width, height });
    }
    if let Some(t) = a.reorder_tolerance_us {
        opts.reorder_tolerance_us = t;
    }
    let format = a.format.unwrap_or_else(|| EventFormat::from_path(&a.events));
    let stream = parse_event_file(&a.events, format, &opts)?;
    let (b, e) = stream.span();
    let sensor = stream.sensor();
    println!(
        "{} events, span [{b}, {e}) us, sensor {}x{}",
        stream.len(),
        sensor.width,
        sensor.height
    );
    if let Some(out) = &a.out {
        write_events(out, &stream)?;
    }
    Ok(())
}

fn window_export(a: WindowArgs, psd: bool) -> Result<()> {
    let cfg = a.run.resolve()?;
    let (stream, annotations) = a.data.load()?;
    let cropped = roi_stream(&stream, &annotations, &a.roi)?;
    let rate = window_rate(&cropped, a.center_us, &cfg)?;
    if psd {
        let estimate = estimate_psd(&rate, cfg.psd_method)?;
        write_atomic(&a.out, |w| estimate.write_csv(w))
    } else {
        write_atomic(&a.out, |w| rate.write_csv(w))
    }
}

fn spectrogram_cmd(a: SpectrogramArgs) -> Result<()> {
    let cfg = a.run.resolve()?;
    let (stream, annotations) = a.data.load()?;
    let cropped = roi_stream(&stream, &annotations, &a.roi)?;
    let (b, e) = cropped.span();
    let dt_us = seconds_to_us(cfg.bin_width)?;
    let n_bins = ((e - b) / dt_us) as usize;
    if n_bins == 0 {
        return Err(Error::OutOfRange("recording is shorter than one bin".into()));
    }
    // whole bins only, starting at the recording start
    let covered_us = n_bins as u64 * dt_us;
    let whole = slice_window(&cropped, b + covered_us / 2, covered_us as f64 * 1e-6)?;
    let rate = bin_events(&whole, cfg.bin_width, n_bins)?.with_kind(cfg.rate_kind);
    let sg = spectrogram(&rate, a.segment_len, a.hop)?;
    write_atomic(&a.out, |w| sg.write_csv(w))
}

fn synth(a: SynthArgs) -> Result<()> {
    let mut cfg = SuiteConfig::default();
    if let Some(v) = a.freq {
        cfg.frequency_hz = v;
    }
    if let Some(v) = a.amplitude {
        cfg.amplitude = v;
        cfg.distractor_amplitude = v;
    }
    if let Some(v) = a.noise {
        cfg.noise_rate = v;
    }
    if let Some(v) = a.rois {
        cfg.n_rois = v;
    }
    if let Some(v) = a.duration {
        cfg.duration_s = v;
    }
    if let Some(v) = a.distractor_freq {
        cfg.distractor_frequency_hz = v;
    }
    if let Some(v) = a.distractor_amplitude {
        cfg.distractor_amplitude = v;
    }
    if let Some(v) = a.distractor_fraction {
        cfg.distractor_fraction = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    let (stream, annotations) = generate_suite(&cfg)?;
    create_dir(&a.out)?;
    let events_name = match a.format {
        EventFormat::Csv => "events.csv",
        EventFormat::Binary => "events.bin",
    };
    write_events(&a.out.join(events_name), &stream)?;
    let json = annotations.to_json()?;
    write_atomic(&a.out.join("annotations.json"), |w| Ok(w.write_all(json.as_bytes())?))
}

fn tune(a: TuneArgs) -> Result<()> {
    let cfg = a.run.resolve()?;
    let (stream, annotations) = a.data.load()?;
    let result = match a.classifier {
        ClassifierKind::EnergyBand => {
            let rows = psd_rows(&stream, &annotations, &cfg, a.split)?;
            let space = SearchSpace {
                n_samples: a.samples,
                seed: cfg.seed,
                ..SearchSpace::default()
            };
            tune_energy_band(&rows, &space, a.mode)?
        }
        ClassifierKind::Energy => {
            let rows = energy_rows(&stream, &annotations, &cfg, a.split)?;
            let range = match &a.energy_range {
                Some(r) => (r[0], r[1]),
                None => (0.0, rows.iter().map(|r| r.1).fold(0.0, f64::max)),
            };
            tune_energy(&rows, a.samples, range, cfg.seed)?
        }
        ClassifierKind::Net => return Err(Error::Param("networks are trained with `train`".into())),
    };
    let json = result.to_json()? + "\n";
    write_atomic(&a.out, |w| Ok(w.write_all(json.as_bytes())?))?;
    println!(
        "train F1 {:.4} with {} parameters",
        result.train_f1,
        result.param_count()
    );
    Ok(())
}

fn train_cmd(a: TrainArgs) -> Result<()> {
    let cfg = a.run.resolve()?;
    let (stream, annotations) = a.data.load()?;
    let data = net_dataset(&stream, &annotations, &cfg, a.split, a.input)?;
    let defaults = TrainConfig::default();
    let config = TrainConfig {
        learning_rate: a.lr.unwrap_or(defaults.learning_rate),
        batch_size: a.batch_size.unwrap_or(defaults.batch_size),
        epochs: a.epochs.unwrap_or(defaults.epochs),
        class_weights: a.uniform_weights.then_some((1.0, 1.0)),
        seed: cfg.seed,
        patience: match a.patience {
            Some(0) => None,
            Some(p) => Some(p),
            None => defaults.patience,
        },
    };
    let shape = NetShape {
        input_kind: a.input,
        input_len: a.input.input_len(cfg.n_bins()?),
        architecture: a.arch,
    };
    let net = build_tiny_net(shape, cfg.seed)?;
    let trained = train(&net, &data, &config)?;
    write_atomic(&a.out, |w| trained.net.save(w))?;
    if let Some(log) = &a.log {
        write_atomic(log, |w| {
            writeln!(w, "epoch,loss")?;
            for (i, l) in trained.epoch_losses.iter().enumerate() {
                writeln!(w, "{i},{l}")?;
            }
            Ok(())
        })?;
    }
    println!(
        "{} epochs, final loss {:.6}, {} parameters",
        trained.epoch_losses.len(),
        trained.final_loss(),
        trained.net.param_count()
    );
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let cfg = a.run.resolve()?;
    let classifier = a.model.load()?;
    let (stream, annotations) = a.data.load()?;
    let predictions = predict(&stream, &annotations, &cfg, a.split, &classifier)?;
    let r = report(&predictions)?;
    create_dir(&a.out)?;
    write_atomic(&a.out.join("metrics.csv"), |w| r.write_csv(w))?;
    let json = serde_json::to_string_pretty(&r)? + "\n";
    write_atomic(&a.out.join("metrics.json"), |w| Ok(w.write_all(json.as_bytes())?))?;
    write_atomic(&a.out.join("predictions.csv"), |w| write_predictions_csv(&predictions, w))?;
    println!(
        "pooled precision {:.4} recall {:.4} F1 {:.4} over {} windows",
        r.pooled.precision,
        r.pooled.recall,
        r.pooled.f1,
        predictions.len()
    );
    Ok(())
}

fn classify(a: ClassifyArgs) -> Result<()> {
    let cfg = a.run.resolve()?;
    let classifier = a.model.load()?;
    let (stream, annotations) = a.data.load()?;
    let cropped = roi_stream(&stream, &annotations, &a.roi)?;
    let rate = window_rate(&cropped, a.center_us, &cfg)?;
    let (label, score) = classifier.classify(&a.roi, &rate, cfg.psd_method)?;
    println!("{label},{score}");
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn usage_errors_exit_with_two() {
        assert_eq!(run(["evfourier", "frobnicate"]), 2);
        assert_eq!(run(["evfourier", "synth"]), 2);
        assert_eq!(run(["evfourier", "synth", "--out", "x", "--bogus"]), 2);
    }

    #[test]
    fn help_exits_cleanly() {
        assert_eq!(run(["evfourier", "--help"]), 0);
    }

    #[test]
    fn flags_override_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        std::fs::write(&path, r#"{"window_d": 2.0, "stride": 0.5, "rate_kind": "unsigned"}"#).unwrap();
        let args = RunArgs {
            config: Some(path),
            window: None,
            bin_width: None,
            stride: Some(0.25),
            psd_method: None,
            rate_kind: None,
            seed: None,
            train_fraction: None,
        };
        let cfg = args.resolve().unwrap();
        assert_eq!(cfg.window_d, 2.0);
        assert_eq!(cfg.stride, 0.25);
        assert_eq!(cfg.rate_kind, RateKind::Unsigned);
        assert_eq!(cfg.bin_width, 0.01);
    }

    #[test]
    fn atomic_write_leaves_no_temp_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.txt");
        write_atomic(&path, |w| Ok(w.write_all(b"hello")?)).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "hello");
        let failed = write_atomic(&dir.path().join("bad.txt"), |_| Err(Error::Param("boom".into())));
        assert!(failed.is_err());
        let names: Vec<_> = std::fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
        assert_eq!(names, vec![OsString::from("out.txt")]);
    }
}
