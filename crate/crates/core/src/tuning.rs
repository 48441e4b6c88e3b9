//! Random search over classifier thresholds, scored by training-set F1.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifiers::{EnergyBandParams, EnergyParams};
use crate::error::{Error, Result};
use crate::evaluation::Metrics;
use crate::events_io::Label;
use crate::spectral::{band_energy_given_total, total_from, PsdEstimate};

/// Consecutive invalid draws tolerated before the space is declared empty.
const MAX_REJECTIONS: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub f_mid_range: (f64, f64),
    pub b_range: (f64, f64),
    pub lambda_range: (f64, f64),
    pub n_samples: usize,
    pub seed: u64,
}

impl Default for SearchSpace {
    fn default() -> Self {
        SearchSpace {
            f_mid_range: (1.8, 6.0),
            b_range: (0.3, 1.8),
            lambda_range: (0.05, 0.3),
            n_samples: 1000,
            seed: 0,
        }
    }
}

impl SearchSpace {
    pub fn validate(&self) -> Result<()> {
        let ordered = |name: &str, (lo, hi): (f64, f64)| {
            if lo < hi && lo.is_finite() && hi.is_finite() {
                Ok(())
            } else {
                Err(Error::Param(format!("{name} range [{lo}, {hi}] must satisfy low < high")))
            }
        };
        ordered("f_mid", self.f_mid_range)?;
        ordered("bandwidth", self.b_range)?;
        ordered("lambda", self.lambda_range)?;
        if self.b_range.0 <= 0.0 {
            return Err(Error::Param("bandwidth range must be positive".into()));
        }
        if self.lambda_range.0 <= 0.0 || self.lambda_range.1 >= 1.0 {
            return Err(Error::Param("lambda range must lie inside (0, 1)".into()));
        }
        if self.n_samples == 0 {
            return Err(Error::Param("n_samples must be at least 1".into()));
        }
        Ok(())
    }

    /// The candidates in draw order; draws with `f_mid - b/2 < 0` are discarded and redrawn.
    pub fn draw(&self) -> Result<Vec<EnergyBandParams>> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut out = Vec::with_capacity(self.n_samples);
        let mut rejected = 0;
        while out.len() < self.n_samples {
            let f_mid = uniform(&mut rng, self.f_mid_range);
            let bandwidth = uniform(&mut rng, self.b_range);
            let lambda = uniform(&mut rng, self.lambda_range);
            match EnergyBandParams::new(f_mid, bandwidth, lambda) {
                Ok(p) => {
                    out.push(p);
                    rejected = 0;
                }
                Err(_) => {
                    rejected += 1;
                    if rejected >= MAX_REJECTIONS {
                        return Err(Error::Param("search space has no valid band (f_mid - b/2 >= 0)".into()));
                    }
                }
            }
        }
        Ok(out)
    }
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TuneMode {
    Global,
    PerRoi,
}

impl std::str::FromStr for TuneMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "global" => Ok(TuneMode::Global),
            "per-roi" | "per_roi" => Ok(TuneMode::PerRoi),
            other => Err(Error::Param(format!("unknown tuning mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum TunedParams {
    Global {
        params: EnergyBandParams,
    },
    PerRoi {
        per_roi: BTreeMap<String, EnergyBandParams>,
        /// Training F1 of each ROI under its own parameters.
        per_roi_f1: BTreeMap<String, f64>,
    },
    Energy {
        params: EnergyParams,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    #[serde(flatten)]
    pub params: TunedParams,
    /// Pooled training F1 of the selected parameters.
    pub train_f1: f64,
    pub seed: u64,
    pub n_samples: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub space: Option<SearchSpace>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy_range: Option<(f64, f64)>,
}

impl TuneResult {
    /// Number of stored decision parameters.
    pub fn param_count(&self) -> usize {
        match &self.params {
            TunedParams::Global { .. } => 3,
            TunedParams::PerRoi { per_roi, .. } => 3 * per_roi.len(),
            TunedParams::Energy { .. } => 1,
        }
    }

    /// Band parameters that apply to `roi_id`.
    pub fn band_params_for(&self, roi_id: &str) -> Result<EnergyBandParams> {
        match &self.params {
            TunedParams::Global { params } => Ok(*params),
            TunedParams::PerRoi { per_roi, .. } => per_roi
                .get(roi_id)
                .copied()
                .ok_or_else(|| Error::Contract(format!("no tuned parameters for roi '{roi_id}'"))),
            TunedParams::Energy { .. } => Err(Error::Contract("tuned parameters are for the energy classifier".into())),
        }
    }

    pub fn energy_params(&self) -> Result<EnergyParams> {
        match &self.params {
            TunedParams::Energy { params } => Ok(*params),
            _ => Err(Error::Contract("tuned parameters are for the energy-band classifier".into())),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        let result: TuneResult = serde_json::from_str(&text)?;
        match &result.params {
            TunedParams::Global { params } => params.validate()?,
            TunedParams::PerRoi { per_roi, .. } => per_roi.values().try_for_each(|p| p.validate())?,
            TunedParams::Energy { params } => {
                EnergyParams::new(params.threshold)?;
            }
        }
        Ok(result)
    }
}

/// One training window: its ROI, label and cached PSD.
#[derive(Debug, Clone, PartialEq)]
pub struct PsdRow {
    pub roi_id: String,
    pub label: Label,
    pub psd: PsdEstimate,
}

fn counts(pairs: impl Iterator<Item = (bool, Label)>) -> [u64; 4] {
    let mut c = [0u64; 4];
    for (pred, label) in pairs {
        c[match (pred, label) {
            (true, Label::Ed) => 0,
            (true, Label::Bg) => 1,
            (false, Label::Ed) => 2,
            (false, Label::Bg) => 3,
        }] += 1;
    }
    c
}

fn metrics(c: [u64; 4]) -> Metrics {
    Metrics::from_counts(c[0], c[1], c[2], c[3])
}

/// Index of the best score; the earliest index wins ties.
fn argmax(scores: impl IntoIterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, s) in scores.into_iter().enumerate() {
        if s > best.1 {
            best = (i, s);
        }
    }
    best.0
}

/// Selects the band triplet with the best training F1, globally or per ROI.
pub fn tune_energy_band(rows: &[PsdRow], space: &SearchSpace, mode: TuneMode) -> Result<TuneResult> {
    if rows.is_empty() {
        return Err(Error::Param("cannot tune on an empty table".into()));
    }
    let candidates = space.draw()?;

    // group rows by ROI (a single group in global mode); totals are computed once
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, r) in rows.iter().enumerate() {
        let key = match mode {
            TuneMode::Global => "",
            TuneMode::PerRoi => r.roi_id.as_str(),
        };
        groups.entry(key).or_default().push(i);
    }
    let totals: Vec<f64> = rows.iter().map(|r| total_from(&r.psd, 0)).collect();
    let group_rows: Vec<&Vec<usize>> = groups.values().collect();

    // per candidate, per group confusion counts
    let table: Vec<Vec<[u64; 4]>> = candidates
        .par_iter()
        .map(|p| {
            group_rows
                .iter()
                .map(|idx| {
                    counts(idx.iter().map(|&i| {
                        let r = &rows[i];
                        let e = band_energy_given_total(&r.psd, p.f_l(), p.f_u(), 0, totals[i]);
                        (e.normalized > p.lambda, r.label)
                    }))
                })
                .collect()
        })
        .collect();

    let result = match mode {
        TuneMode::Global => {
            let best = argmax(table.iter().map(|c| metrics(c[0]).f1));
            TuneResult {
                params: TunedParams::Global {
                    params: candidates[best],
                },
                train_f1: metrics(table[best][0]).f1,
                seed: space.seed,
                n_samples: space.n_samples,
                space: Some(*space),
                energy_range: None,
            }
        }
        TuneMode::PerRoi => {
            let mut per_roi = BTreeMap::new();
            let mut per_roi_f1 = BTreeMap::new();
            let mut pooled = [0u64; 4];
            for (g, roi) in groups.keys().enumerate() {
                let best = argmax(table.iter().map(|c| metrics(c[g]).f1));
                let c = table[best][g];
                for k in 0..4 {
                    pooled[k] += c[k];
                }
                per_roi.insert(roi.to_string(), candidates[best]);
                per_roi_f1.insert(roi.to_string(), metrics(c).f1);
            }
            TuneResult {
                params: TunedParams::PerRoi { per_roi, per_roi_f1 },
                train_f1: metrics(pooled).f1,
                seed: space.seed,
                n_samples: space.n_samples,
                space: Some(*space),
                energy_range: None,
            }
        }
    };
    Ok(result)
}

/// Selects the total-energy threshold with the best training F1 among
/// `n_samples` uniform draws from `range`.
pub fn tune_energy(table: &[(Label, f64)], n_samples: usize, range: (f64, f64), seed: u64) -> Result<TuneResult> {
    if table.is_empty() {
        return Err(Error::Param("cannot tune on an empty table".into()));
    }
    if !(range.0 < range.1) || !range.0.is_finite() || !range.1.is_finite() {
        return Err(Error::Param(format!("threshold range [{}, {}] must satisfy low < high", range.0, range.1)));
    }
    if range.0 < 0.0 {
        return Err(Error::Param("energy thresholds must be >= 0".into()));
    }
    if n_samples == 0 {
        return Err(Error::Param("n_samples must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let thresholds: Vec<f64> = (0..n_samples).map(|_| uniform(&mut rng, range)).collect();
    let scores: Vec<Metrics> = thresholds
        .par_iter()
        .map(|&t| metrics(counts(table.iter().map(|&(label, e)| (e > t, label)))))
        .collect();
    let best = argmax(scores.iter().map(|m| m.f1));
    Ok(TuneResult {
        params: TunedParams::Energy {
            params: EnergyParams::new(thresholds[best])?,
        },
        train_f1: scores[best].f1,
        seed,
        n_samples,
        space: None,
        energy_range: Some(range),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifiers::{classify_energy_band, EnergyBandParams};
    use crate::evaluation::score;
    use crate::spectral::{band_energy, periodogram_values};
    use rand_distr::{Distribution, Normal};
    use std::f64::consts::PI;

    /// ED rows carry a noisy 2 Hz sinusoid, BG rows white noise.
    fn synthetic_rows(n_per_class: usize, rois: usize, seed: u64) -> Vec<PsdRow> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let mut rows = Vec::new();
        for i in 0..2 * n_per_class {
            let ed = i % 2 == 0;
            let phase = rng.random::<f64>() * 2.0 * PI;
            let x: Vec<f64> = (0..500)
                .map(|k| {
                    let s = if ed { 2.0 * (2.0 * PI * 2.0 * k as f64 * 0.01 + phase).sin() } else { 0.0 };
                    s + noise.sample(&mut rng)
                })
                .collect();
            rows.push(PsdRow {
                roi_id: format!("R{}", i % rois),
                label: Label::from_positive(ed),
                psd: periodogram_values(&x, 0.01).unwrap(),
            });
        }
        rows
    }

    fn rescore(rows: &[PsdRow], p: &EnergyBandParams) -> f64 {
        let preds: Vec<Label> = rows
            .iter()
            .map(|r| classify_energy_band(&band_energy(&r.psd, p.f_l(), p.f_u()), p).unwrap())
            .collect();
        let labels: Vec<Label> = rows.iter().map(|r| r.label).collect();
        score(&preds, &labels).unwrap().f1
    }

    #[test]
    fn candidates_are_valid_and_deterministic() {
        let space = SearchSpace {
            f_mid_range: (0.0, 2.0),
            n_samples: 500,
            seed: 4,
            ..SearchSpace::default()
        };
        let a = space.draw().unwrap();
        assert_eq!(a.len(), 500);
        assert_eq!(a, space.draw().unwrap());
        for p in &a {
            assert!(p.f_l() >= 0.0);
            assert!(p.lambda >= 0.05 && p.lambda <= 0.3);
        }
    }

    #[test]
    fn single_sample_returns_the_first_draw() {
        let rows = synthetic_rows(10, 1, 0);
        let space = SearchSpace {
            n_samples: 1,
            seed: 9,
            ..SearchSpace::default()
        };
        let r = tune_energy_band(&rows, &space, TuneMode::Global).unwrap();
        assert_eq!(r.band_params_for("any").unwrap(), space.draw().unwrap()[0]);
    }

    #[test]
    fn finds_the_oscillation_band_and_agrees_with_grid_oracle() {
        let rows = synthetic_rows(40, 1, 1);
        let space = SearchSpace {
            seed: 2,
            ..SearchSpace::default()
        };
        let r = tune_energy_band(&rows, &space, TuneMode::Global).unwrap();
        let best = r.band_params_for("").unwrap();
        assert!((1.5..=2.7).contains(&best.f_mid), "f_mid {}", best.f_mid);

        // exhaustive grid at 0.1 resolution with a fixed lambda grid
        let mut grid_best = (f64::NEG_INFINITY, 0.0);
        for i in 0..=42 {
            let f_mid = 1.8 + 0.1 * i as f64;
            for j in 0..=15 {
                let b = 0.3 + 0.1 * j as f64;
                for k in 0..=5 {
                    let p = EnergyBandParams::new(f_mid, b, 0.05 + 0.05 * k as f64).unwrap();
                    let f1 = rescore(&rows, &p);
                    if f1 > grid_best.0 {
                        grid_best = (f1, f_mid);
                    }
                }
            }
        }
        assert!((1.5..=2.7).contains(&grid_best.1));
        assert!(r.train_f1 >= grid_best.0 - 0.05, "{} vs grid {}", r.train_f1, grid_best.0);
    }

    #[test]
    fn selected_candidate_dominates_every_other() {
        let rows = synthetic_rows(15, 1, 3);
        let space = SearchSpace {
            n_samples: 60,
            seed: 5,
            ..SearchSpace::default()
        };
        let r = tune_energy_band(&rows, &space, TuneMode::Global).unwrap();
        assert_eq!(rescore(&rows, &r.band_params_for("").unwrap()), r.train_f1);
        for p in space.draw().unwrap() {
            assert!(rescore(&rows, &p) <= r.train_f1);
        }
        assert_eq!(r, tune_energy_band(&rows, &space, TuneMode::Global).unwrap());
    }

    #[test]
    fn per_roi_mode_stores_three_parameters_per_roi() {
        let rows = synthetic_rows(36, 18, 6);
        let space = SearchSpace {
            n_samples: 50,
            ..SearchSpace::default()
        };
        let r = tune_energy_band(&rows, &space, TuneMode::PerRoi).unwrap();
        assert_eq!(r.param_count(), 54);
        assert!(r.band_params_for("R17").is_ok());
        assert!(matches!(r.band_params_for("R18"), Err(Error::Contract(_))));
        let back: TuneResult = serde_json::from_str(&r.to_json().unwrap()).unwrap();
        assert_eq!(back, r);

        // every ROI's choice is its own argmax
        if let TunedParams::PerRoi { per_roi, per_roi_f1 } = &r.params {
            for (roi, p) in per_roi {
                let own: Vec<PsdRow> = rows.iter().filter(|x| &x.roi_id == roi).cloned().collect();
                assert_eq!(rescore(&own, p), per_roi_f1[roi]);
                for q in space.draw().unwrap() {
                    assert!(rescore(&own, &q) <= per_roi_f1[roi]);
                }
            }
        } else {
            panic!("expected per-roi parameters");
        }
    }

    #[test]
    fn energy_threshold_lands_in_the_gap() {
        let table: Vec<(Label, f64)> = (0..20)
            .map(|i| (Label::Bg, i as f64 / 20.0))
            .chain((0..20).map(|i| (Label::Ed, 10.0 + i as f64)))
            .collect();
        let r = tune_energy(&table, 200, (0.0, 20.0), 1).unwrap();
        let t = r.energy_params().unwrap().threshold;
        assert_eq!(r.train_f1, 1.0);
        assert!(t > 1.0 && t < 10.0, "threshold {t}");
        assert_eq!(r.param_count(), 1);
    }

    #[test]
    fn energy_degenerate_cases() {
        let all_bg = vec![(Label::Bg, 1.0), (Label::Bg, 5.0)];
        let r = tune_energy(&all_bg, 10, (0.0, 10.0), 3).unwrap();
        let first = tune_energy(&all_bg, 1, (0.0, 10.0), 3).unwrap();
        assert_eq!(r.train_f1, 0.0);
        assert_eq!(r.energy_params().unwrap(), first.energy_params().unwrap());
        assert!(tune_energy(&all_bg, 1, (5.0, 5.0), 0).is_err());
        assert!(tune_energy(&[], 1, (0.0, 1.0), 0).is_err());
    }

    #[test]
    fn invalid_spaces() {
        let s = SearchSpace {
            n_samples: 0,
            ..SearchSpace::default()
        };
        assert!(s.validate().is_err());
        let s = SearchSpace {
            lambda_range: (0.3, 0.05),
            ..SearchSpace::default()
        };
        assert!(s.draw().is_err());
        let s = SearchSpace {
            f_mid_range: (0.0, 0.1),
            b_range: (1.0, 1.5),
            ..SearchSpace::default()
        };
        assert!(s.draw().is_err());
        assert!(tune_energy_band(&[], &SearchSpace::default(), TuneMode::Global).is_err());
    }
}
