//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the process exits non-zero if any criterion fails.

use std::f64::consts::PI;
use std::panic;
use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use event_fourier::classifiers::{build_tiny_net, train, Architecture, InputKind, NetShape, TinyNet, TrainConfig};
use event_fourier::evaluation::random_classifier_baseline;
use event_fourier::pipeline::{energy_rows, predict, psd_rows, report, Classifier, RunConfig, Split};
use event_fourier::spectral::{
    band_energy, dft_naive, fft, periodogram_values, welch_values, WelchParams, Window,
};
use event_fourier::synth::{generate_suite, SuiteConfig};
use event_fourier::tuning::{tune_energy, tune_energy_band, SearchSpace, TuneMode, TuneResult};
use event_fourier::{Annotations, EventStream, Label, RateKind};

// tolerances and budgets
const FFT_REL_TOL: f64 = 1e-9;
const FFT_BUDGET: Duration = Duration::from_secs(30);
const PARSEVAL_REL_TOL: f64 = 1e-6;
const GRAD_REL_TOL: f64 = 1e-4;
const GRAD_BUDGET: Duration = Duration::from_secs(60);
const E2E_BUDGET: Duration = Duration::from_secs(300);
const E2E_MIN_F1: f64 = 0.90;
const ZERO_MEAN_GAP: f64 = 0.1;
const WELCH_EQ_TOL: f64 = 1e-9;

type Check = fn() -> Result<String, String>;

fn main() {
    let checks: [(u32, &str, Check); 11] = [
        (1, "fft equals naive DFT", c1_fft_oracle),
        (2, "Parseval for every PSD method", c2_parseval),
        (3, "band energy of a pure 2 Hz sinusoid", c3_band_energy),
        (4, "random-classifier baseline", c4_random_baseline),
        (5, "parameter counts", c5_param_counts),
        (6, "gradients and overfitting", c6_gradients),
        (7, "synthetic end-to-end, energy-band vs energy", c7_end_to_end),
        (8, "shorter window scores lower", c8_window_length),
        (9, "polarity ablation", c9_polarity),
        (10, "Welch consistency", c10_welch),
        (11, "seeded CLI pipeline is byte-identical", c11_determinism),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (id, name, check) in checks {
        let start = Instant::now();
        let outcome = panic::catch_unwind(check).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {id:>2} PASS  {name}: {detail} ({secs:.1} s)"),
            Err(detail) => {
                failed += 1;
                println!("criterion {id:>2} FAIL  {name}: {detail} ({secs:.1} s)");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 11 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn random_signal(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn c1_fft_oracle() -> Result<String, String> {
    let start = Instant::now();
    let lengths: Vec<usize> = (1..=64).chain([500, 1024, 2048]).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for i in 0..200 {
        let n = lengths[i % lengths.len()];
        let x = random_signal(&mut rng, n);
        let fast = fft(&x, 0.01);
        let slow = dft_naive(&x, 0.01);
        let scale = slow.magnitudes.iter().fold(0.0f64, |m, v| m.max(*v)).max(f64::MIN_POSITIVE);
        let err = fast
            .bins
            .iter()
            .zip(&slow.bins)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0f64, f64::max)
            / scale;
        worst = worst.max(err);
    }
    let elapsed = start.elapsed();
    ensure(worst <= FFT_REL_TOL, || format!("max relative error {worst:e}"))?;
    ensure(elapsed < FFT_BUDGET, || format!("took {elapsed:?}"))?;
    Ok(format!("200 signals, max relative error {worst:.2e}"))
}

fn c2_parseval() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for i in 0..100 {
        let n = [500, 512, 300, 64][i % 4];
        let x = random_signal(&mut rng, n);
        let mean_square = x.iter().map(|v| v * v).sum::<f64>() / n as f64;
        let rect = WelchParams {
            segment_len: n / 4,
            overlap: 0.0,
            window: Window::Rectangular,
        };
        for psd in [periodogram_values(&x, 0.01).unwrap(), welch_values(&x, 0.01, &rect).unwrap()] {
            let rel = (psd.total_energy() - mean_square).abs() / mean_square;
            worst = worst.max(rel);
        }
    }
    ensure(worst <= PARSEVAL_REL_TOL, || format!("max relative error {worst:e}"))?;
    Ok(format!("periodogram and rectangular Welch, max relative error {worst:.2e}"))
}

fn c3_band_energy() -> Result<String, String> {
    let x: Vec<f64> = (0..500).map(|k| (2.0 * PI * 2.0 * k as f64 * 0.01).sin()).collect();
    // oracle: one-sided power straight from the naive DFT
    let spec = dft_naive(&x, 0.01);
    let power: Vec<f64> = spec
        .bins
        .iter()
        .enumerate()
        .map(|(j, c)| if j == 0 || j == 250 { c.norm_sqr() } else { 2.0 * c.norm_sqr() })
        .collect();
    let total: f64 = power.iter().sum();
    let oracle = |lo: f64, hi: f64| {
        power
            .iter()
            .enumerate()
            .filter(|(j, _)| {
                let f = *j as f64 * spec.df;
                f >= lo - 1e-9 && f <= hi + 1e-9
            })
            .map(|(_, p)| p)
            .sum::<f64>()
            / total
    };
    let psd = periodogram_values(&x, 0.01).unwrap();
    let inside = band_energy(&psd, 1.8, 2.2).normalized;
    let outside = band_energy(&psd, 4.0, 6.0).normalized;
    ensure((inside - oracle(1.8, 2.2)).abs() < 1e-9, || format!("in-band {inside} vs oracle {}", oracle(1.8, 2.2)))?;
    ensure((outside - oracle(4.0, 6.0)).abs() < 1e-9, || format!("off-band {outside} vs oracle"))?;
    ensure(inside >= 0.95, || format!("in-band {inside}"))?;
    ensure(outside <= 0.01, || format!("off-band {outside}"))?;
    Ok(format!("[1.8, 2.2] Hz: {inside:.6}, [4, 6] Hz: {outside:.2e}"))
}

fn c4_random_baseline() -> Result<String, String> {
    let m = random_classifier_baseline(427_997, 10_364).map_err(|e| e.to_string())?;
    ensure((m.precision - 0.0242).abs() <= 1e-4, || format!("precision {}", m.precision))?;
    ensure((m.f1 - 0.046).abs() <= 1e-3, || format!("F1 {}", m.f1))?;
    Ok(format!("precision {:.4}, F1 {:.4}", m.precision, m.f1))
}

fn c5_param_counts() -> Result<String, String> {
    let count = |kind, len, arch| {
        build_tiny_net(
            NetShape {
                input_kind: kind,
                input_len: len,
                architecture: arch,
            },
            0,
        )
        .unwrap()
        .param_count()
    };
    let got = [
        (count(InputKind::Spectrum, 251, Architecture::Fc), 40_600.0),
        (count(InputKind::Rate, 500, Architecture::Fc), 72_500.0),
        (count(InputKind::Spectrum, 251, Architecture::Conv1d), 1_700.0),
    ];
    for (n, target) in got {
        ensure((n as f64 - target).abs() / target <= 0.05, || format!("{n} vs {target}"))?;
    }

    // 18 ROIs, per-ROI tuning on a tiny synthetic table
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let rows: Vec<_> = (0..36)
        .map(|i| {
            let ed = i % 2 == 0;
            let x: Vec<f64> = (0..500)
                .map(|k| {
                    let s = if ed { (2.0 * PI * 2.0 * k as f64 * 0.01).sin() } else { 0.0 };
                    s + rng.random_range(-1.0..1.0)
                })
                .collect();
            event_fourier::tuning::PsdRow {
                roi_id: format!("N{:02}", i / 2),
                label: Label::from_positive(ed),
                psd: periodogram_values(&x, 0.01).unwrap(),
            }
        })
        .collect();
    let space = SearchSpace {
        n_samples: 50,
        ..SearchSpace::default()
    };
    let tuned = tune_energy_band(&rows, &space, TuneMode::PerRoi).unwrap();
    ensure(tuned.param_count() == 54, || format!("per-ROI parameters {}", tuned.param_count()))?;
    Ok(format!(
        "fc/spectrum {}, fc/rate {}, conv1d {}, per-ROI energy-band {}",
        got[0].0,
        got[1].0,
        got[2].0,
        tuned.param_count()
    ))
}

/// Central differences on a sample of coordinates. A coordinate is skipped
/// when the step flips a ReLU for some input, since the loss is not smooth there.
fn finite_difference_error(net: &TinyNet, batch: &[(&[f64], Label)], rng: &mut ChaCha8Rng) -> (f64, usize) {
    let weights = (1.0, 3.0);
    let (_, grad) = net.loss_and_grad(batch, weights).unwrap();
    let pattern = |n: &TinyNet| -> Vec<Vec<bool>> { batch.iter().map(|(x, _)| n.relu_pattern(x).unwrap()).collect() };
    let base = pattern(net);
    let eps = 1e-4;
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for _ in 0..60 {
        let i = rng.random_range(0..net.param_count());
        let mut plus = net.clone();
        plus.params_mut()[i] += eps;
        let mut minus = net.clone();
        minus.params_mut()[i] -= eps;
        if pattern(&plus) != base || pattern(&minus) != base {
            continue;
        }
        let lp = plus.loss(batch, weights).unwrap();
        let lm = minus.loss(batch, weights).unwrap();
        let numeric = (lp - lm) / (2.0 * eps);
        let rel = (numeric - grad[i]).abs() / numeric.abs().max(grad[i].abs()).max(1e-6);
        worst = worst.max(rel);
        checked += 1;
    }
    (worst, checked)
}

fn c6_gradients() -> Result<String, String> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for b in 0..10 {
        for (kind, len, arch) in [
            (InputKind::Spectrum, 251, Architecture::Fc),
            (InputKind::Rate, 500, Architecture::Fc),
            (InputKind::Spectrum, 251, Architecture::Conv1d),
        ] {
            let net = build_tiny_net(
                NetShape {
                    input_kind: kind,
                    input_len: len,
                    architecture: arch,
                },
                b,
            )
            .unwrap();
            let inputs: Vec<Vec<f64>> = (0..8).map(|_| random_signal(&mut rng, len)).collect();
            let batch: Vec<(&[f64], Label)> = inputs
                .iter()
                .enumerate()
                .map(|(i, x)| (x.as_slice(), Label::from_positive(i % 3 == 0)))
                .collect();
            let (err, n) = finite_difference_error(&net, &batch, &mut rng);
            worst = worst.max(err);
            checked += n;
        }
    }
    ensure(worst <= GRAD_REL_TOL, || format!("max relative gradient error {worst:e}"))?;

    // 32 separable samples: ED windows carry a 2 Hz tone, BG windows a 6 Hz tone
    let samples: Vec<(Vec<f64>, Label)> = (0..32)
        .map(|i| {
            let ed = i % 2 == 0;
            let f = if ed { 2.0 } else { 6.0 };
            let phase = rng.random::<f64>() * 2.0 * PI;
            let x: Vec<f64> = (0..500)
                .map(|k| (2.0 * PI * f * k as f64 * 0.01 + phase).sin() + 0.3 * rng.random_range(-1.0..1.0))
                .collect();
            (fft(&x, 0.01).peak_normalized(), Label::from_positive(ed))
        })
        .collect();
    let cfg = TrainConfig {
        epochs: 200,
        patience: None,
        ..TrainConfig::default()
    };
    let mut accuracies = Vec::new();
    for arch in [Architecture::Fc, Architecture::Conv1d] {
        let shape = NetShape {
            input_kind: InputKind::Spectrum,
            input_len: 251,
            architecture: arch,
        };
        let net = train(&build_tiny_net(shape, 1).unwrap(), &samples, &cfg).unwrap().net;
        let correct = samples.iter().filter(|(x, l)| net.predict(x).unwrap() == *l).count();
        let acc = correct as f64 / samples.len() as f64;
        ensure(acc == 1.0, || format!("{arch:?} training accuracy {acc}"))?;
        accuracies.push(acc);
    }
    let elapsed = start.elapsed();
    ensure(elapsed < GRAD_BUDGET, || format!("took {elapsed:?}"))?;
    Ok(format!(
        "{checked} coordinates, max relative error {worst:.2e}; overfit accuracy fc {}, conv1d {}",
        accuracies[0], accuracies[1]
    ))
}

/// Four ROIs; ED is a 2 Hz oscillation with A = 20 rho, BG has 6 Hz distractor bursts.
fn e2e_suite() -> SuiteConfig {
    SuiteConfig {
        n_rois: 4,
        duration_s: 600.0,
        frequency_hz: 2.0,
        amplitude: 15.0,
        noise_rate: 0.75,
        distractor_frequency_hz: 6.0,
        distractor_amplitude: 15.0,
        distractor_fraction: 0.1,
        seed: 2024,
        ..SuiteConfig::default()
    }
}

fn e2e_config(window_d: f64) -> RunConfig {
    RunConfig {
        window_d,
        stride: 0.25,
        seed: 7,
        ..RunConfig::default()
    }
}

/// Pooled held-out F1; a held-out split without ED windows is an error.
fn held_out_f1(stream: &EventStream, ann: &Annotations, cfg: &RunConfig, tuned: TuneResult) -> Result<f64, String> {
    let preds = predict(stream, ann, cfg, Split::Test, &Classifier::Tuned(tuned)).unwrap();
    let positives = preds.iter().filter(|p| p.label == Label::Ed).count();
    ensure(positives > 0, || "held-out split has no ED windows".into())?;
    Ok(report(&preds).unwrap().pooled.f1)
}

fn band_f1(stream: &EventStream, ann: &Annotations, cfg: &RunConfig) -> Result<f64, String> {
    let rows = psd_rows(stream, ann, cfg, Split::Train).unwrap();
    let space = SearchSpace {
        seed: cfg.seed,
        ..SearchSpace::default()
    };
    let tuned = tune_energy_band(&rows, &space, TuneMode::PerRoi).unwrap();
    held_out_f1(stream, ann, cfg, tuned)
}

fn energy_f1(stream: &EventStream, ann: &Annotations, cfg: &RunConfig) -> Result<f64, String> {
    let rows = energy_rows(stream, ann, cfg, Split::Train).unwrap();
    let hi = rows.iter().map(|r| r.1).fold(0.0, f64::max);
    let tuned = tune_energy(&rows, 1000, (0.0, hi), cfg.seed).unwrap();
    held_out_f1(stream, ann, cfg, tuned)
}

fn c7_end_to_end() -> Result<String, String> {
    let start = Instant::now();
    let (stream, ann) = generate_suite(&e2e_suite()).unwrap();
    let cfg = e2e_config(5.0);
    let band = band_f1(&stream, &ann, &cfg)?;
    let energy = energy_f1(&stream, &ann, &cfg)?;
    let elapsed = start.elapsed();
    ensure(band >= E2E_MIN_F1, || format!("energy-band F1 {band:.4}"))?;
    ensure(energy < band, || format!("energy F1 {energy:.4} not below energy-band F1 {band:.4}"))?;
    ensure(elapsed < E2E_BUDGET, || format!("took {elapsed:?}"))?;
    Ok(format!("held-out F1 energy-band {band:.4}, energy {energy:.4}"))
}

fn c8_window_length() -> Result<String, String> {
    let (stream, ann) = generate_suite(&e2e_suite()).unwrap();
    let long = band_f1(&stream, &ann, &e2e_config(5.0))?;
    let short = band_f1(&stream, &ann, &e2e_config(1.0))?;
    ensure(short < long, || format!("d = 1 s F1 {short:.4} vs d = 5 s F1 {long:.4}"))?;
    Ok(format!("F1 at d = 1 s {short:.4} < d = 5 s {long:.4}"))
}

fn c9_polarity() -> Result<String, String> {
    // background rate dominates every bin
    let suite = SuiteConfig {
        duration_s: 600.0,
        amplitude: 2000.0,
        noise_rate: 2000.0,
        distractor_amplitude: 2000.0,
        seed: 99,
        ..e2e_suite()
    };
    let (stream, ann) = generate_suite(&suite).unwrap();
    let f1 = |kind| {
        let cfg = RunConfig {
            rate_kind: kind,
            stride: 0.5,
            ..e2e_config(5.0)
        };
        band_f1(&stream, &ann, &cfg)
    };
    let signed = f1(RateKind::Signed)?;
    let unsigned = f1(RateKind::Unsigned)?;
    let zero_mean = f1(RateKind::ZeroMean)?;
    let detail = format!("F1 signed {signed:.4}, unsigned {unsigned:.4}, zero-mean {zero_mean:.4}");
    ensure(unsigned < signed, || detail.clone())?;
    ensure((signed - zero_mean).abs() <= ZERO_MEAN_GAP, || detail.clone())?;
    Ok(detail)
}

fn c10_welch() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut checked = 0;
    for &f in &[1.0, 2.0, 3.4, 5.0, 7.2, 12.6] {
        for _ in 0..5 {
            let phase = rng.random::<f64>() * 2.0 * PI;
            let x: Vec<f64> = (0..2000)
                .map(|k| (2.0 * PI * f * k as f64 * 0.01 + phase).sin() + 0.2 * rng.random_range(-1.0..1.0))
                .collect();
            let p = periodogram_values(&x, 0.01).unwrap();
            let w = welch_values(&x, 0.01, &WelchParams::default_for(x.len())).unwrap();
            let fp = p.frequency(p.argmax_from(1).unwrap());
            let fw = w.frequency(w.argmax_from(1).unwrap());
            ensure((fp - fw).abs() <= w.df.max(p.df) + 1e-9, || {
                format!("{f} Hz: periodogram peak {fp}, Welch peak {fw}")
            })?;
            checked += 1;
        }
    }
    let mut worst: f64 = 0.0;
    for n in [500, 37, 1024] {
        let x = random_signal(&mut rng, n);
        let p = periodogram_values(&x, 0.01).unwrap();
        let single = WelchParams {
            segment_len: n,
            overlap: 0.0,
            window: Window::Rectangular,
        };
        let w = welch_values(&x, 0.01, &single).unwrap();
        ensure(w.len() == p.len(), || "bin count differs".into())?;
        let scale = p.power.iter().fold(0.0f64, |m, v| m.max(*v));
        for (a, b) in w.power.iter().zip(&p.power) {
            worst = worst.max((a - b).abs() / scale);
        }
    }
    ensure(worst <= WELCH_EQ_TOL, || format!("single-segment deviation {worst:e}"))?;
    Ok(format!("{checked} sinusoids agree within one bin; single-segment deviation {worst:.2e}"))
}

fn run_pipeline(dir: &Path) -> Result<(), String> {
    let d = |p: &str| dir.join(p).to_string_lossy().into_owned();
    let data = ["--events", &d("data/events.csv"), "--annotations", &d("data/annotations.json")];
    let steps: Vec<Vec<String>> = vec![
        vec!["synth", "--out", &d("data"), "--rois", "3", "--duration", "120", "--amplitude", "100", "--noise", "5", "--seed", "3"]
            .into_iter()
            .map(String::from)
            .collect(),
        [&["tune"][..], &data, &["--mode", "per-roi", "--samples", "200", "--stride", "0.5", "--seed", "3", "--out", &d("tuned.json")]].concat()
            .into_iter()
            .map(String::from)
            .collect(),
        [&["train"][..], &data, &["--arch", "conv1d", "--epochs", "3", "--stride", "1", "--seed", "3", "--out", &d("model.json"), "--log", &d("loss.csv")]].concat()
            .into_iter()
            .map(String::from)
            .collect(),
        [&["eval"][..], &data, &["--classifier", "energy-band", "--params", &d("tuned.json"), "--stride", "0.5", "--out", &d("eval_band")]].concat()
            .into_iter()
            .map(String::from)
            .collect(),
        [&["eval"][..], &data, &["--classifier", "net", "--model", &d("model.json"), "--stride", "0.5", "--out", &d("eval_net")]].concat()
            .into_iter()
            .map(String::from)
            .collect(),
    ];
    for step in steps {
        let argv = std::iter::once("evfourier".to_string()).chain(step.iter().cloned());
        let code = event_fourier::cli::run(argv);
        ensure(code == 0, || format!("`{}` exited with {code}", step.join(" ")))?;
    }
    Ok(())
}

fn c11_determinism() -> Result<String, String> {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_pipeline(a.path())?;
    run_pipeline(b.path())?;
    let files = [
        "data/events.csv",
        "data/annotations.json",
        "tuned.json",
        "model.json",
        "loss.csv",
        "eval_band/metrics.csv",
        "eval_band/metrics.json",
        "eval_band/predictions.csv",
        "eval_net/metrics.csv",
        "eval_net/predictions.csv",
    ];
    for f in files {
        let x = std::fs::read(a.path().join(f)).map_err(|e| format!("{f}: {e}"))?;
        let y = std::fs::read(b.path().join(f)).map_err(|e| format!("{f}: {e}"))?;
        ensure(x == y, || format!("{f} differs between runs"))?;
    }
    Ok(format!("{} output files identical", files.len()))
}
