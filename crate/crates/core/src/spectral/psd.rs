use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{plan_for, PsdMethod};
use crate::error::{Error, Result};
use crate::rate::RateSignal;

#[derive(Debug, Clone, PartialEq)]
pub struct PsdEstimate {
    pub df: f64,
    pub power: Vec<f64>,
    pub method: PsdMethod,
}

impl PsdEstimate {
    pub fn frequency(&self, j: usize) -> f64 {
        j as f64 * self.df
    }

    pub fn len(&self) -> usize {
        self.power.len()
    }

    pub fn is_empty(&self) -> bool {
        self.power.is_empty()
    }

    /// `sum(power) * df`, the mean square of the underlying signal.
    pub fn total_energy(&self) -> f64 {
        self.power.iter().sum::<f64>() * self.df
    }

    /// Index of the largest bin at or above `from`; ties resolve to the lowest index.
    pub fn argmax_from(&self, from: usize) -> Option<usize> {
        let mut best: Option<usize> = None;
        for j in from..self.power.len() {
            if best.is_none_or(|b| self.power[j] > self.power[b]) {
                best = Some(j);
            }
        }
        best
    }

    /// CSV `f_hz,power`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "f_hz,power")?;
        for (j, p) in self.power.iter().enumerate() {
            writeln!(w, "{},{}", self.frequency(j), p)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    Rectangular,
    Hann,
}

impl Window {
    /// Periodic window of length `len`.
    pub fn coefficients(self, len: usize) -> Vec<f64> {
        match self {
            Window::Rectangular => vec![1.0; len],
            Window::Hann => (0..len)
                .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / len as f64).cos())
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchParams {
    pub segment_len: usize,
    /// Fraction of a segment shared with the next one, in `[0, 1)`.
    pub overlap: f64,
    pub window: Window,
}

impl WelchParams {
    /// Quarter-length Hann segments with 50% overlap.
    pub fn default_for(n: usize) -> Self {
        WelchParams {
            segment_len: (n / 4).max(2),
            overlap: 0.5,
            window: Window::Hann,
        }
    }

    fn step(&self) -> usize {
        let shared = (self.overlap * self.segment_len as f64).round() as usize;
        self.segment_len.saturating_sub(shared).max(1)
    }
}

/// Squared one-sided DFT magnitudes of `x * window`, scaled by `dt / sum(window^2)`
/// and doubled on every bin except DC and (for even lengths) Nyquist.
fn one_sided_power(x: &[f64], window: &[f64], dt: f64, out: &mut [f64]) {
    let n = x.len();
    let mut buf: Vec<Complex64> = x
        .iter()
        .zip(window)
        .map(|(&v, &w)| Complex64::new(v * w, 0.0))
        .collect();
    plan_for(n).process(&mut buf);
    let norm = dt / window.iter().map(|w| w * w).sum::<f64>();
    let half = n / 2;
    for (j, o) in out.iter_mut().enumerate().take(half + 1) {
        let doubled = j != 0 && !(n.is_multiple_of(2) && j == half);
        let scale = if doubled { 2.0 } else { 1.0 };
        *o += scale * norm * buf[j].norm_sqr();
    }
}

pub fn periodogram_values(values: &[f64], dt: f64) -> Result<PsdEstimate> {
    if values.len() < 2 {
        return Err(Error::Param(format!(
            "periodogram needs at least 2 samples, got {}",
            values.len()
        )));
    }
    let n = values.len();
    let mut power = vec![0.0; n / 2 + 1];
    one_sided_power(values, &vec![1.0; n], dt, &mut power);
    Ok(PsdEstimate {
        df: 1.0 / (n as f64 * dt),
        power,
        method: PsdMethod::Periodogram,
    })
}

pub fn periodogram(rate: &RateSignal) -> Result<PsdEstimate> {
    periodogram_values(&rate.values, rate.bin_width_s)
}

pub fn welch_values(values: &[f64], dt: f64, params: &WelchParams) -> Result<PsdEstimate> {
    let n = values.len();
    let len = params.segment_len;
    if len < 2 || len > n {
        return Err(Error::Param(format!(
            "Welch segment length {len} must lie in [2, {n}]"
        )));
    }
    if !(0.0..1.0).contains(&params.overlap) {
        return Err(Error::Param(format!(
            "Welch overlap {} must lie in [0, 1)",
            params.overlap
        )));
    }
    let step = params.step();
    let window = params.window.coefficients(len);
    let segments = (n - len) / step + 1;
    let mut power = vec![0.0; len / 2 + 1];
    for s in 0..segments {
        one_sided_power(&values[s * step..s * step + len], &window, dt, &mut power);
    }
    power.iter_mut().for_each(|p| *p /= segments as f64);
    Ok(PsdEstimate {
        df: 1.0 / (len as f64 * dt),
        power,
        method: PsdMethod::Welch,
    })
}

pub fn welch(rate: &RateSignal, params: &WelchParams) -> Result<PsdEstimate> {
    welch_values(&rate.values, rate.bin_width_s, params)
}
