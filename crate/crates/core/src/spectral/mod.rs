//! Fourier-domain machinery over rate signals.
//!
//! PSD estimates are one-sided and normalized so that `sum(power) * df` equals
//! the mean square of the time signal. Absolute energies depend on that
//! convention; normalized band energies do not.

mod band;
mod fft;
mod psd;
mod spectrogram;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

pub use band::{band_bin_range, band_energy, band_energy_with, BandEnergyFeature, BandOptions};
pub(crate) use band::{band_energy_given_total, total_from};
pub use fft::{dft_naive, fft, fft_full, plan_for, FftPlan};
pub use psd::{periodogram, periodogram_values, welch, welch_values, PsdEstimate, WelchParams, Window};
pub use spectrogram::{spectrogram, Spectrogram};

use crate::error::{Error, Result};
use crate::rate::RateSignal;

/// One-sided DFT of a real signal: bins `f = 0, df, ..., floor(n/2) df`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub n: usize,
    pub df: f64,
    pub bins: Vec<Complex64>,
    pub magnitudes: Vec<f64>,
}

impl Spectrum {
    fn from_bins(n: usize, dt: f64, bins: Vec<Complex64>) -> Self {
        let magnitudes = bins.iter().map(|c| c.norm()).collect();
        Spectrum {
            n,
            df: 1.0 / (n as f64 * dt),
            bins,
            magnitudes,
        }
    }

    pub fn frequency(&self, j: usize) -> f64 {
        j as f64 * self.df
    }

    /// Magnitudes divided by their peak; an all-zero spectrum stays zero.
    pub fn peak_normalized(&self) -> Vec<f64> {
        peak_normalize(&self.magnitudes)
    }
}

/// Divides by the largest absolute value; all-zero input stays zero.
pub fn peak_normalize(values: &[f64]) -> Vec<f64> {
    let peak = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak == 0.0 {
        vec![0.0; values.len()]
    } else {
        values.iter().map(|v| v / peak).collect()
    }
}

pub fn rate_spectrum(rate: &RateSignal) -> Result<Spectrum> {
    if rate.is_empty() {
        return Err(Error::Param("spectrum of an empty rate signal".into()));
    }
    Ok(fft(&rate.values, rate.bin_width_s))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PsdMethod {
    Periodogram,
    Welch,
}

impl std::str::FromStr for PsdMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "periodogram" => Ok(PsdMethod::Periodogram),
            "welch" => Ok(PsdMethod::Welch),
            other => Err(Error::Param(format!("unknown PSD method '{other}'"))),
        }
    }
}

/// PSD of `rate` by `method`, Welch with its default parameters.
pub fn estimate_psd(rate: &RateSignal, method: PsdMethod) -> Result<PsdEstimate> {
    match method {
        PsdMethod::Periodogram => periodogram(rate),
        PsdMethod::Welch => welch(rate, &WelchParams::default_for(rate.len())),
    }
}
