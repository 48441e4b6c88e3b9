use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events_io::Label;
use crate::spectral::BandEnergyFeature;

/// Threshold on the total signal energy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyParams {
    pub threshold: f64,
}

impl EnergyParams {
    pub fn new(threshold: f64) -> Result<Self> {
        if !(threshold >= 0.0) || !threshold.is_finite() {
            return Err(Error::Param(format!("energy threshold {threshold} must be >= 0")));
        }
        Ok(EnergyParams { threshold })
    }
}

/// Band center, bandwidth and decision threshold on the normalized band energy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyBandParams {
    pub f_mid: f64,
    pub bandwidth: f64,
    pub lambda: f64,
}

impl EnergyBandParams {
    pub fn new(f_mid: f64, bandwidth: f64, lambda: f64) -> Result<Self> {
        let p = EnergyBandParams {
            f_mid,
            bandwidth,
            lambda,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth > 0.0) {
            return Err(Error::Param(format!("bandwidth {} must be > 0", self.bandwidth)));
        }
        if !(self.f_mid - self.bandwidth / 2.0 >= 0.0) {
            return Err(Error::Param(format!(
                "band [{} - {}/2, ...] starts below 0 Hz",
                self.f_mid, self.bandwidth
            )));
        }
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return Err(Error::Param(format!("lambda {} must lie in (0, 1)", self.lambda)));
        }
        Ok(())
    }

    pub fn f_l(&self) -> f64 {
        self.f_mid - self.bandwidth / 2.0
    }

    pub fn f_u(&self) -> f64 {
        self.f_mid + self.bandwidth / 2.0
    }
}

/// ED iff the total energy strictly exceeds the threshold.
pub fn classify_energy(total_energy: f64, params: &EnergyParams) -> Label {
    Label::from_positive(total_energy > params.threshold)
}

/// ED iff the normalized band energy strictly exceeds `lambda`.
///
/// The feature must have been computed on the band the parameters describe.
pub fn classify_energy_band(feature: &BandEnergyFeature, params: &EnergyBandParams) -> Result<Label> {
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0);
    if !close(feature.f_l, params.f_l()) || !close(feature.f_u, params.f_u()) {
        return Err(Error::Contract(format!(
            "feature band [{}, {}] differs from parameter band [{}, {}]",
            feature.f_l,
            feature.f_u,
            params.f_l(),
            params.f_u()
        )));
    }
    Ok(Label::from_positive(feature.normalized > params.lambda))
}
