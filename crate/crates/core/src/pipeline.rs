//! Window extraction and classifier application over annotated recordings.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifiers::{classify_energy, classify_energy_band, InputKind, TinyNet};
use crate::error::{Error, Result};
use crate::evaluation::{score_per_roi, RoiReport};
use crate::events_io::{
    crop_to_roi, generate_labels, seconds_to_us, slice_window, Annotations, EventStream, Label, LabeledWindow,
};
use crate::rate::{bin_events, bins_for_window, RateKind, RateSignal};
use crate::spectral::{band_energy, estimate_psd, PsdEstimate, PsdMethod};
use crate::tuning::{PsdRow, TuneResult, TunedParams};

/// Window geometry and signal options shared by every command.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub window_d: f64,
    pub bin_width: f64,
    pub stride: f64,
    pub psd_method: PsdMethod,
    pub rate_kind: RateKind,
    pub seed: u64,
    /// Leading fraction of the recording used for training.
    pub train_fraction: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            window_d: 5.0,
            bin_width: 0.01,
            stride: 0.033,
            psd_method: PsdMethod::Periodogram,
            rate_kind: RateKind::Signed,
            seed: 0,
            train_fraction: 0.8,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.n_bins()?;
        if seconds_to_us(self.stride)? == 0 {
            return Err(Error::Param(format!("stride {} s must be positive", self.stride)));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Param(format!(
                "train fraction {} must lie in (0, 1)",
                self.train_fraction
            )));
        }
        Ok(())
    }

    pub fn n_bins(&self) -> Result<usize> {
        bins_for_window(self.window_d, self.bin_width)
    }
}

/// Which part of the recording a command works on.
///
/// The recording is cut once in time; windows straddling the cut belong to neither part.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    All,
    Train,
    Test,
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(Split::All),
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(Error::Param(format!("unknown split '{other}'"))),
        }
    }
}

/// Time span of `split` inside `span`.
pub fn split_span(span: (u64, u64), split: Split, train_fraction: f64) -> (u64, u64) {
    let cut = span.0 + ((span.1 - span.0) as f64 * train_fraction).round() as u64;
    match split {
        Split::All => span,
        Split::Train => (span.0, cut),
        Split::Test => (cut, span.1),
    }
}

/// Labeled windows of every ROI, in annotation order.
pub fn labeled_windows(annotations: &Annotations, span: (u64, u64), cfg: &RunConfig, split: Split) -> Result<Vec<LabeledWindow>> {
    cfg.validate()?;
    let part = split_span(span, split, cfg.train_fraction);
    let mut out = Vec::new();
    for roi in &annotations.rois {
        out.extend(generate_labels(&annotations.track(&roi.id), part, cfg.stride, cfg.window_d)?);
    }
    Ok(out)
}

/// Rate signal of one window of an already cropped stream.
pub fn window_rate(roi_stream: &EventStream, center_us: u64, cfg: &RunConfig) -> Result<RateSignal> {
    let slice = slice_window(roi_stream, center_us, cfg.window_d)?;
    Ok(bin_events(&slice, cfg.bin_width, cfg.n_bins()?)?.with_kind(cfg.rate_kind))
}

/// Applies `f` to the rate of every labeled window of `split`, in parallel
/// within each ROI; output order follows the windows.
pub fn map_windows<T, F>(
    stream: &EventStream,
    annotations: &Annotations,
    cfg: &RunConfig,
    split: Split,
    f: F,
) -> Result<Vec<(LabeledWindow, T)>>
where
    T: Send,
    F: Fn(&LabeledWindow, &RateSignal) -> Result<T> + Sync,
{
    cfg.validate()?;
    let part = split_span(stream.span(), split, cfg.train_fraction);
    let mut out = Vec::new();
    for roi in &annotations.rois {
        let cropped = crop_to_roi(stream, roi)?;
        let windows = generate_labels(&annotations.track(&roi.id), part, cfg.stride, cfg.window_d)?;
        let mapped: Vec<T> = windows
            .par_iter()
            .map(|w| f(w, &window_rate(&cropped, w.center_us, cfg)?))
            .collect::<Result<_>>()?;
        out.extend(windows.into_iter().zip(mapped));
    }
    Ok(out)
}

/// Tuning table: one cached PSD per window.
pub fn psd_rows(stream: &EventStream, annotations: &Annotations, cfg: &RunConfig, split: Split) -> Result<Vec<PsdRow>> {
    let method = cfg.psd_method;
    Ok(map_windows(stream, annotations, cfg, split, |_, r| estimate_psd(r, method))?
        .into_iter()
        .map(|(w, psd)| PsdRow {
            roi_id: w.roi_id,
            label: w.label,
            psd,
        })
        .collect())
}

/// Total signal energy per window.
pub fn energy_rows(stream: &EventStream, annotations: &Annotations, cfg: &RunConfig, split: Split) -> Result<Vec<(Label, f64)>> {
    let method = cfg.psd_method;
    Ok(map_windows(stream, annotations, cfg, split, |_, r| Ok(estimate_psd(r, method)?.total_energy()))?
        .into_iter()
        .map(|(w, e)| (w.label, e))
        .collect())
}

/// Network inputs per window.
pub fn net_dataset(
    stream: &EventStream,
    annotations: &Annotations,
    cfg: &RunConfig,
    split: Split,
    input: InputKind,
) -> Result<Vec<(Vec<f64>, Label)>> {
    Ok(map_windows(stream, annotations, cfg, split, |_, r| Ok(input.prepare(r)))?
        .into_iter()
        .map(|(w, x)| (x, w.label))
        .collect())
}

#[derive(Debug, Clone)]
pub enum Classifier {
    /// Energy-band or energy thresholds, as tuned.
    Tuned(TuneResult),
    Net(TinyNet),
}

impl Classifier {
    /// Decision and its underlying score for one window.
    ///
    /// The score is the normalized band energy, the total energy, or the
    /// ED-minus-BG logit margin.
    pub fn classify(&self, roi_id: &str, rate: &RateSignal, method: PsdMethod) -> Result<(Label, f64)> {
        match self {
            Classifier::Tuned(t) => {
                let psd = estimate_psd(rate, method)?;
                classify_psd(t, roi_id, &psd)
            }
            Classifier::Net(net) => {
                let input = net.shape().input_kind.prepare(rate);
                let [bg, ed] = net.forward(&input)?;
                Ok((Label::from_positive(ed > bg), ed - bg))
            }
        }
    }

    fn check(&self, annotations: &Annotations, cfg: &RunConfig) -> Result<()> {
        match self {
            Classifier::Tuned(t) => {
                if matches!(t.params, TunedParams::PerRoi { .. }) {
                    for roi in &annotations.rois {
                        t.band_params_for(&roi.id)?;
                    }
                }
            }
            Classifier::Net(net) => {
                let shape = net.shape();
                let expected = shape.input_kind.input_len(cfg.n_bins()?);
                if shape.input_len != expected {
                    return Err(Error::Contract(format!(
                        "model expects {} inputs, windows give {expected}",
                        shape.input_len
                    )));
                }
            }
        }
        Ok(())
    }
}

pub(crate) fn classify_psd(tuned: &TuneResult, roi_id: &str, psd: &PsdEstimate) -> Result<(Label, f64)> {
    match &tuned.params {
        TunedParams::Energy { params } => {
            let e = psd.total_energy();
            Ok((classify_energy(e, params), e))
        }
        _ => {
            let p = tuned.band_params_for(roi_id)?;
            let feature = band_energy(psd, p.f_l(), p.f_u());
            Ok((classify_energy_band(&feature, &p)?, feature.normalized))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub roi_id: String,
    pub center_us: u64,
    pub label: Label,
    pub prediction: Label,
    pub score: f64,
}

pub fn predict(
    stream: &EventStream,
    annotations: &Annotations,
    cfg: &RunConfig,
    split: Split,
    classifier: &Classifier,
) -> Result<Vec<Prediction>> {
    classifier.check(annotations, cfg)?;
    let method = cfg.psd_method;
    Ok(
        map_windows(stream, annotations, cfg, split, |w, r| classifier.classify(&w.roi_id, r, method))?
            .into_iter()
            .map(|(w, (prediction, score))| Prediction {
                roi_id: w.roi_id,
                center_us: w.center_us,
                label: w.label,
                prediction,
                score,
            })
            .collect(),
    )
}

pub fn report(predictions: &[Prediction]) -> Result<RoiReport> {
    let rows: Vec<(&str, Label, Label)> = predictions
        .iter()
        .map(|p| (p.roi_id.as_str(), p.prediction, p.label))
        .collect();
    score_per_roi(&rows)
}

/// CSV `roi_id,center_us,label,prediction,score`.
pub fn write_predictions_csv<W: Write>(predictions: &[Prediction], mut w: W) -> Result<()> {
    writeln!(w, "roi_id,center_us,label,prediction,score")?;
    for p in predictions {
        writeln!(w, "{},{},{},{},{}", p.roi_id, p.center_us, p.label, p.prediction, p.score)?;
    }
    Ok(())
}
