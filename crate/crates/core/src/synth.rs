//! Synthetic event streams with known oscillations and ground-truth tracks.
//!
//! Inside an active interval, ON events arrive as an inhomogeneous Poisson
//! process with intensity `max(0, A sin(2 pi f t)) + rho` and OFF events with
//! `max(0, -A sin(2 pi f t)) + rho`; elsewhere both polarities arrive at
//! `rho`. The signed rate therefore has expectation `A sin(2 pi f t)` per
//! second while the oscillation is active. Pixels are uniform over the ROI.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events_io::{AnnotationTrack, Annotations, Event, EventStream, Polarity, Roi, SensorSize};

pub const DEFAULT_CONTRAST: f64 = 0.15;

/// An oscillating source, active on a set of intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Oscillation {
    pub frequency_hz: f64,
    /// Peak event rate (events/s) added by the oscillation.
    pub amplitude: f64,
    pub intervals: Vec<(u64, u64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub roi: Roi,
    pub frequency_hz: f64,
    pub amplitude: f64,
    /// Background events per second, per polarity.
    pub noise_rate: f64,
    /// Nominal contrast threshold of the modelled sensor; metadata only.
    pub contrast: f64,
    /// Intervals where the annotated oscillation is active.
    pub intervals: Vec<(u64, u64)>,
    /// Unannotated oscillations, e.g. casual wing flaps.
    #[serde(default)]
    pub distractors: Vec<Oscillation>,
    pub seed: u64,
}

impl SynthConfig {
    pub fn new(roi: Roi, frequency_hz: f64, amplitude: f64, noise_rate: f64, seed: u64) -> Self {
        SynthConfig {
            roi,
            frequency_hz,
            amplitude,
            noise_rate,
            contrast: DEFAULT_CONTRAST,
            intervals: Vec::new(),
            distractors: Vec::new(),
            seed,
        }
    }

    pub fn with_intervals(mut self, intervals: Vec<(u64, u64)>) -> Self {
        self.intervals = intervals;
        self
    }

    fn validate(&self, span: (u64, u64)) -> Result<()> {
        let check = |what: &str, f: f64, a: f64, intervals: &[(u64, u64)]| -> Result<()> {
            if !(f > 0.0) || !(a >= 0.0) || !f.is_finite() || !a.is_finite() {
                return Err(Error::Param(format!(
                    "{what}: frequency {f} must be > 0 and amplitude {a} >= 0"
                )));
            }
            AnnotationTrack::new(self.roi.id.clone(), intervals.to_vec())?;
            if intervals.iter().any(|&(s, e)| s < span.0 || e > span.1) {
                return Err(Error::Param(format!("{what}: interval outside span {span:?}")));
            }
            Ok(())
        };
        check("oscillation", self.frequency_hz, self.amplitude, &self.intervals)?;
        for d in &self.distractors {
            check("distractor", d.frequency_hz, d.amplitude, &d.intervals)?;
        }
        if !(self.noise_rate >= 0.0) || !self.noise_rate.is_finite() {
            return Err(Error::Param(format!("noise rate {} must be >= 0", self.noise_rate)));
        }
        if span.0 > span.1 {
            return Err(Error::Param(format!("span {span:?} is reversed")));
        }
        Ok(())
    }

    fn sources(&self) -> Vec<Oscillation> {
        let mut all = vec![Oscillation {
            frequency_hz: self.frequency_hz,
            amplitude: self.amplitude,
            intervals: self.intervals.clone(),
        }];
        all.extend(self.distractors.iter().cloned());
        all
    }
}

/// Generates the events of one ROI over `span` and the matching annotation track.
///
/// The returned stream's sensor is the smallest one containing the ROI.
pub fn generate(config: &SynthConfig, span: (u64, u64)) -> Result<(EventStream, AnnotationTrack)> {
    config.validate(span)?;
    let sources = config.sources();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    // piecewise-constant envelope: split the span where any source turns on or off
    let mut cuts = vec![span.0, span.1];
    for s in &sources {
        for &(a, b) in &s.intervals {
            cuts.push(a);
            cuts.push(b);
        }
    }
    cuts.sort_unstable();
    cuts.dedup();

    let roi = &config.roi;
    let mut events = Vec::new();
    for seg in cuts.windows(2) {
        let (seg_start, seg_end) = (seg[0], seg[1]);
        let active: Vec<&Oscillation> = sources
            .iter()
            .filter(|s| s.amplitude > 0.0 && s.intervals.iter().any(|&(a, b)| a <= seg_start && seg_end <= b))
            .collect();
        let envelope = config.noise_rate + active.iter().map(|s| s.amplitude).sum::<f64>();
        if envelope <= 0.0 {
            continue;
        }
        // candidates for both polarities at 2 * envelope, polarity by coin flip, then thinning
        let gap = Exp::new(2.0 * envelope).map_err(|e| Error::Param(e.to_string()))?;
        let mut t_us = seg_start as f64;
        loop {
            t_us += gap.sample(&mut rng) * 1e6;
            if t_us >= seg_end as f64 {
                break;
            }
            let on = rng.random_bool(0.5);
            let t_s = t_us * 1e-6;
            let drive: f64 = active
                .iter()
                .map(|s| s.amplitude * (2.0 * PI * s.frequency_hz * t_s).sin())
                .map(|v| if on { v.max(0.0) } else { (-v).max(0.0) })
                .sum();
            let accept = (config.noise_rate + drive) / envelope;
            if rng.random::<f64>() >= accept {
                continue;
            }
            let x = rng.random_range(roi.x_min..roi.x_max);
            let y = rng.random_range(roi.y_min..roi.y_max);
            let polarity = if on { Polarity::On } else { Polarity::Off };
            let t = (t_us.floor() as u64).min(seg_end - 1);
            events.push(Event::new(t, x, y, polarity));
        }
    }
    let sensor = SensorSize {
        width: roi.x_max,
        height: roi.y_max,
    };
    let stream = EventStream::new(events, sensor, span.0, span.1)?;
    let track = AnnotationTrack::new(roi.id.clone(), config.intervals.clone())?;
    Ok((stream, track))
}

/// A multi-ROI recording with randomly placed oscillation episodes and distractors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub n_rois: usize,
    pub sensor: SensorSize,
    pub duration_s: f64,
    pub frequency_hz: f64,
    pub amplitude: f64,
    pub noise_rate: f64,
    /// Episode length range, seconds.
    pub episode_s: (f64, f64),
    /// Quiet time between episodes, seconds.
    pub gap_s: (f64, f64),
    pub distractor_frequency_hz: f64,
    pub distractor_amplitude: f64,
    /// Fraction of the non-episode time covered by distractor bursts.
    pub distractor_fraction: f64,
    pub distractor_burst_s: f64,
    pub seed: u64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            n_rois: 4,
            sensor: SensorSize::DAVIS346,
            duration_s: 300.0,
            frequency_hz: 2.0,
            amplitude: 40.0,
            noise_rate: 2.0,
            episode_s: (20.0, 40.0),
            gap_s: (30.0, 90.0),
            distractor_frequency_hz: 6.0,
            distractor_amplitude: 40.0,
            distractor_fraction: 0.1,
            distractor_burst_s: 5.0,
            seed: 0,
        }
    }
}

/// Distinct, reproducible per-ROI seed.
fn roi_seed(seed: u64, index: usize) -> u64 {
    seed ^ (index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// ROIs laid out on a grid covering the sensor.
pub fn grid_rois(n: usize, sensor: SensorSize) -> Result<Vec<Roi>> {
    if n == 0 {
        return Err(Error::Param("need at least one roi".into()));
    }
    let cols = ((n as f64 * sensor.width as f64 / sensor.height as f64).sqrt().ceil() as usize).clamp(1, n);
    let rows = n.div_ceil(cols);
    let cell_w = sensor.width as usize / cols;
    let cell_h = sensor.height as usize / rows;
    if cell_w < 2 || cell_h < 2 {
        return Err(Error::Param(format!("{n} rois do not fit the sensor")));
    }
    Ok((0..n)
        .map(|i| {
            let (r, c) = (i / cols, i % cols);
            let x0 = (c * cell_w) as u16;
            let y0 = (r * cell_h) as u16;
            Roi::new(
                format!("N{:02}", i + 1),
                x0,
                y0,
                x0 + cell_w as u16,
                y0 + cell_h as u16,
            )
        })
        .collect())
}

fn place_episodes(rng: &mut ChaCha8Rng, cfg: &SuiteConfig, span_us: (u64, u64)) -> Vec<(u64, u64)> {
    let to_us = |s: f64| (s * 1e6).round() as u64;
    let mut out = Vec::new();
    let mut t = span_us.0 + to_us(rng.random_range(cfg.gap_s.0..=cfg.gap_s.1) / 2.0);
    loop {
        let dur = to_us(rng.random_range(cfg.episode_s.0..=cfg.episode_s.1));
        if t + dur + to_us(cfg.gap_s.0 / 2.0) > span_us.1 {
            break;
        }
        out.push((t, t + dur));
        t += dur + to_us(rng.random_range(cfg.gap_s.0..=cfg.gap_s.1));
    }
    out
}

/// Distractor bursts inside the quiet gaps, kept a burst length away from episodes.
fn place_distractors(
    rng: &mut ChaCha8Rng,
    cfg: &SuiteConfig,
    span_us: (u64, u64),
    episodes: &[(u64, u64)],
) -> Vec<(u64, u64)> {
    let burst = (cfg.distractor_burst_s * 1e6).round() as u64;
    if burst == 0 || cfg.distractor_fraction <= 0.0 || cfg.distractor_amplitude <= 0.0 {
        return Vec::new();
    }
    let mut gaps = Vec::new();
    let mut cursor = span_us.0;
    for &(s, e) in episodes {
        gaps.push((cursor, s));
        cursor = e;
    }
    gaps.push((cursor, span_us.1));

    let mut out = Vec::new();
    for (a, b) in gaps {
        let (lo, hi) = (a + burst, b.saturating_sub(burst));
        if hi <= lo + burst {
            continue;
        }
        let want = ((b - a) as f64 * cfg.distractor_fraction / burst as f64).round() as u64;
        let slots = want.min((hi - lo) / burst);
        if slots == 0 {
            continue;
        }
        let slot_len = (hi - lo) / slots;
        for k in 0..slots {
            let start = lo + k * slot_len + rng.random_range(0..=slot_len - burst);
            out.push((start, start + burst));
        }
    }
    out
}

/// Generates every ROI of the suite and merges them into one stream.
///
/// The annotations carry the span so the CSV export reparses exactly.
pub fn generate_suite(cfg: &SuiteConfig) -> Result<(EventStream, Annotations)> {
    let span = (0u64, (cfg.duration_s * 1e6).round() as u64);
    let rois = grid_rois(cfg.n_rois, cfg.sensor)?;
    let mut streams = Vec::with_capacity(rois.len());
    let mut tracks = Vec::with_capacity(rois.len());
    for (i, roi) in rois.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(roi_seed(cfg.seed, i));
        let episodes = place_episodes(&mut rng, cfg, span);
        let distractors = place_distractors(&mut rng, cfg, span, &episodes);
        let config = SynthConfig {
            roi: roi.clone(),
            frequency_hz: cfg.frequency_hz,
            amplitude: cfg.amplitude,
            noise_rate: cfg.noise_rate,
            contrast: DEFAULT_CONTRAST,
            intervals: episodes,
            distractors: vec![Oscillation {
                frequency_hz: cfg.distractor_frequency_hz,
                amplitude: cfg.distractor_amplitude,
                intervals: distractors,
            }],
            seed: rng.random(),
        };
        let (stream, track) = generate(&config, span)?;
        streams.push(stream);
        tracks.push(track);
    }
    let stream = EventStream::merge(streams, cfg.sensor, span.0, span.1)?;
    let annotations = Annotations {
        sensor: cfg.sensor,
        span_us: Some(span),
        rois,
        tracks,
    };
    annotations.validate()?;
    Ok((stream, annotations))
}
