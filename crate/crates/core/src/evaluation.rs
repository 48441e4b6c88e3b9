//! Precision, recall and F1, per ROI and pooled at the count level.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events_io::Label;

/// Confusion counts and the scores derived from them.
///
/// Any ratio with an empty denominator is defined as 0, and `degenerate` is
/// set when that rule was needed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub degenerate: bool,
}

impl Metrics {
    pub fn from_counts(tp: u64, fp: u64, fn_: u64, tn: u64) -> Self {
        let (precision, p_deg) = ratio(tp as f64, (tp + fp) as f64);
        let (recall, r_deg) = ratio(tp as f64, (tp + fn_) as f64);
        let (f1, f_deg) = f1_of(precision, recall);
        Metrics {
            tp,
            fp,
            fn_,
            tn,
            precision,
            recall,
            f1,
            degenerate: p_deg || r_deg || f_deg,
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn add(&self, other: &Metrics) -> Metrics {
        Metrics::from_counts(
            self.tp + other.tp,
            self.fp + other.fp,
            self.fn_ + other.fn_,
            self.tn + other.tn,
        )
    }
}

fn ratio(num: f64, den: f64) -> (f64, bool) {
    if den > 0.0 {
        (num / den, false)
    } else {
        (0.0, true)
    }
}

fn f1_of(precision: f64, recall: f64) -> (f64, bool) {
    if precision + recall > 0.0 {
        (2.0 * precision * recall / (precision + recall), false)
    } else {
        (0.0, true)
    }
}

/// Counts for predictions against labels, without length checks.
pub(crate) fn confusion<I>(pairs: I) -> Metrics
where
    I: IntoIterator<Item = (Label, Label)>,
{
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for (pred, label) in pairs {
        match (pred, label) {
            (Label::Ed, Label::Ed) => tp += 1,
            (Label::Ed, Label::Bg) => fp += 1,
            (Label::Bg, Label::Ed) => fn_ += 1,
            (Label::Bg, Label::Bg) => tn += 1,
        }
    }
    Metrics::from_counts(tp, fp, fn_, tn)
}

pub fn score(predictions: &[Label], labels: &[Label]) -> Result<Metrics> {
    if predictions.len() != labels.len() {
        return Err(Error::Contract(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    if labels.is_empty() {
        return Err(Error::Contract("cannot score an empty sample".into()));
    }
    Ok(confusion(predictions.iter().copied().zip(labels.iter().copied())))
}

/// Expected scores of a fair-coin classifier; counts are expectations and may be fractional.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpectedMetrics {
    pub tp: f64,
    pub fp: f64,
    #[serde(rename = "fn")]
    pub fn_: f64,
    pub tn: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

pub fn random_classifier_baseline(n_tot: u64, n_target: u64) -> Result<ExpectedMetrics> {
    if n_target == 0 || n_target > n_tot {
        return Err(Error::Param(format!(
            "need 0 < n_target <= n_tot, got n_target = {n_target}, n_tot = {n_tot}"
        )));
    }
    let tp = n_target as f64 / 2.0;
    let fn_ = tp;
    let fp = (n_tot - n_target) as f64 / 2.0;
    let tn = fp;
    let precision = tp / (tp + fp);
    let recall = tp / (tp + fn_);
    let (f1, _) = f1_of(precision, recall);
    Ok(ExpectedMetrics {
        tp,
        fp,
        fn_,
        tn,
        precision,
        recall,
        f1,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoiReport {
    pub per_roi: BTreeMap<String, Metrics>,
    pub pooled: Metrics,
}

impl RoiReport {
    /// CSV `roi_id,tp,fp,fn,tn,precision,recall,f1`, ROIs in id order, then a `pooled` row.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "roi_id,tp,fp,fn,tn,precision,recall,f1")?;
        let rows = self
            .per_roi
            .iter()
            .map(|(id, m)| (id.as_str(), m))
            .chain(std::iter::once(("pooled", &self.pooled)));
        for (id, m) in rows {
            writeln!(
                w,
                "{id},{},{},{},{},{},{},{}",
                m.tp, m.fp, m.fn_, m.tn, m.precision, m.recall, m.f1
            )?;
        }
        Ok(())
    }
}

pub fn score_per_roi<S: AsRef<str>>(rows: &[(S, Label, Label)]) -> Result<RoiReport> {
    if rows.is_empty() {
        return Err(Error::Contract("cannot score an empty sample".into()));
    }
    let mut counts: BTreeMap<String, [u64; 4]> = BTreeMap::new();
    for (roi, pred, label) in rows {
        let c = counts.entry(roi.as_ref().to_string()).or_default();
        let slot = match (pred, label) {
            (Label::Ed, Label::Ed) => 0,
            (Label::Ed, Label::Bg) => 1,
            (Label::Bg, Label::Ed) => 2,
            (Label::Bg, Label::Bg) => 3,
        };
        c[slot] += 1;
    }
    let per_roi: BTreeMap<String, Metrics> = counts
        .into_iter()
        .map(|(id, c)| (id, Metrics::from_counts(c[0], c[1], c[2], c[3])))
        .collect();
    let pooled = per_roi
        .values()
        .fold(Metrics::from_counts(0, 0, 0, 0), |acc, m| acc.add(m));
    Ok(RoiReport { per_roi, pooled })
}
