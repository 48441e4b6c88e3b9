use serde::{Deserialize, Serialize};

use super::PsdEstimate;

/// Slack on bin-edge comparisons, as a fraction of `df`.
const EDGE_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BandOptions {
    /// Drop the DC bin from both the band and the total.
    pub exclude_dc: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandEnergyFeature {
    pub f_l: f64,
    pub f_u: f64,
    pub band_energy: f64,
    pub total_energy: f64,
    /// `band_energy / total_energy`, or 0 when the total is 0.
    pub normalized: f64,
}

impl BandEnergyFeature {
    pub fn from_energies(f_l: f64, f_u: f64, band_energy: f64, total_energy: f64) -> Self {
        let normalized = if total_energy > 0.0 {
            (band_energy / total_energy).clamp(0.0, 1.0)
        } else {
            0.0
        };
        BandEnergyFeature {
            f_l,
            f_u,
            band_energy,
            total_energy,
            normalized,
        }
    }
}

/// Inclusive bin range `[lo, hi]` with `f_l <= j * df <= f_u`, or `None` if no bin qualifies.
pub fn band_bin_range(df: f64, n_bins: usize, f_l: f64, f_u: f64) -> Option<(usize, usize)> {
    if n_bins == 0 || f_u < f_l {
        return None;
    }
    let lo = (f_l / df - EDGE_SLACK).ceil().max(0.0);
    let hi = (f_u / df + EDGE_SLACK).floor();
    if hi < 0.0 || lo > hi || lo >= n_bins as f64 {
        return None;
    }
    Some((lo as usize, (hi as usize).min(n_bins - 1)))
}

pub fn band_energy(psd: &PsdEstimate, f_l: f64, f_u: f64) -> BandEnergyFeature {
    band_energy_with(psd, f_l, f_u, BandOptions::default())
}

/// Energy in `[f_l, f_u]` (both edges inclusive) normalized by the total energy.
pub fn band_energy_with(psd: &PsdEstimate, f_l: f64, f_u: f64, opts: BandOptions) -> BandEnergyFeature {
    let first = usize::from(opts.exclude_dc);
    let total = total_from(psd, first);
    band_energy_given_total(psd, f_l, f_u, first, total)
}

pub(crate) fn total_from(psd: &PsdEstimate, first: usize) -> f64 {
    psd.power.iter().skip(first).sum::<f64>() * psd.df
}

/// Same result as `band_energy_with` for a precomputed `total_from(psd, first)`.
pub(crate) fn band_energy_given_total(
    psd: &PsdEstimate,
    f_l: f64,
    f_u: f64,
    first: usize,
    total: f64,
) -> BandEnergyFeature {
    let band = match band_bin_range(psd.df, psd.power.len(), f_l, f_u) {
        Some((lo, hi)) if hi >= first => psd.power[lo.max(first)..=hi].iter().sum::<f64>() * psd.df,
        _ => 0.0,
    };
    BandEnergyFeature::from_energies(f_l, f_u, band, total)
}
