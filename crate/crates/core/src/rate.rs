//! Event-rate signals: per-bin ON/OFF counts and the 1-D summaries built from them.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events_io::{seconds_to_us, EventStream, Polarity};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateKind {
    /// `r_on - r_off`
    Signed,
    /// `r_on + r_off`
    Unsigned,
    /// Unsigned rate minus its mean.
    ZeroMean,
}

impl std::str::FromStr for RateKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "signed" => Ok(RateKind::Signed),
            "unsigned" => Ok(RateKind::Unsigned),
            "zero_mean" | "zero-mean" => Ok(RateKind::ZeroMean),
            other => Err(Error::Param(format!("unknown rate kind '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateSignal {
    pub bin_width_s: f64,
    pub t0_us: u64,
    pub r_on: Vec<u32>,
    pub r_off: Vec<u32>,
    pub values: Vec<f64>,
    pub kind: RateKind,
}

impl RateSignal {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Center time of bin `k`, in seconds.
    pub fn bin_center_s(&self, k: usize) -> f64 {
        self.t0_us as f64 * 1e-6 + (k as f64 + 0.5) * self.bin_width_s
    }

    pub fn with_kind(&self, kind: RateKind) -> RateSignal {
        match kind {
            RateKind::Signed => to_signed(self),
            RateKind::Unsigned => to_unsigned(self),
            RateKind::ZeroMean => to_zero_mean(&to_unsigned(self)),
        }
    }

    /// CSV `k,t_center_s,r_on,r_off,value`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "k,t_center_s,r_on,r_off,value")?;
        for k in 0..self.len() {
            writeln!(
                w,
                "{k},{},{},{},{}",
                self.bin_center_s(k),
                self.r_on[k],
                self.r_off[k],
                self.values[k]
            )?;
        }
        Ok(())
    }
}

/// Number of bins of width `bin_width_s` in a window of `duration_s`.
///
/// The window must be a whole number of bins.
pub fn bins_for_window(duration_s: f64, bin_width_s: f64) -> Result<usize> {
    let d = seconds_to_us(duration_s)?;
    let dt = seconds_to_us(bin_width_s)?;
    if dt == 0 || d == 0 {
        return Err(Error::Param(format!(
            "window {duration_s} s and bin width {bin_width_s} s must both be positive"
        )));
    }
    if d % dt != 0 {
        return Err(Error::Param(format!(
            "window {duration_s} s is not a whole number of {bin_width_s} s bins"
        )));
    }
    Ok((d / dt) as usize)
}

/// Counts events per bin starting at the stream's `t_begin`; returns the signed rate.
pub fn bin_events(stream: &EventStream, bin_width_s: f64, n_bins: usize) -> Result<RateSignal> {
    let dt_us = seconds_to_us(bin_width_s)?;
    if dt_us == 0 {
        return Err(Error::Param("bin width must be positive".into()));
    }
    if n_bins == 0 {
        return Err(Error::Param("n_bins must be at least 1".into()));
    }
    let t0 = stream.t_begin();
    let end = t0 + dt_us * n_bins as u64;
    let mut r_on = vec![0u32; n_bins];
    let mut r_off = vec![0u32; n_bins];
    for e in stream.events() {
        if e.t_us < t0 || e.t_us >= end {
            return Err(Error::OutOfRange(format!(
                "event at {} us outside binned range [{t0}, {end})",
                e.t_us
            )));
        }
        let k = ((e.t_us - t0) / dt_us) as usize;
        match e.polarity {
            Polarity::On => r_on[k] += 1,
            Polarity::Off => r_off[k] += 1,
        }
    }
    let mut rate = RateSignal {
        bin_width_s: dt_us as f64 * 1e-6,
        t0_us: t0,
        r_on,
        r_off,
        values: Vec::new(),
        kind: RateKind::Signed,
    };
    rate.values = signed_values(&rate);
    Ok(rate)
}

fn signed_values(rate: &RateSignal) -> Vec<f64> {
    rate.r_on
        .iter()
        .zip(&rate.r_off)
        .map(|(&on, &off)| on as f64 - off as f64)
        .collect()
}

pub fn to_signed(rate: &RateSignal) -> RateSignal {
    RateSignal {
        values: signed_values(rate),
        kind: RateKind::Signed,
        ..rate.clone()
    }
}

pub fn to_unsigned(rate: &RateSignal) -> RateSignal {
    let values = rate
        .r_on
        .iter()
        .zip(&rate.r_off)
        .map(|(&on, &off)| on as f64 + off as f64)
        .collect();
    RateSignal {
        values,
        kind: RateKind::Unsigned,
        ..rate.clone()
    }
}

/// Subtracts the mean of `rate.values`, whatever their kind.
pub fn to_zero_mean(rate: &RateSignal) -> RateSignal {
    let n = rate.values.len().max(1) as f64;
    let mean = rate.values.iter().sum::<f64>() / n;
    let mut values: Vec<f64> = rate.values.iter().map(|v| v - mean).collect();
    // second pass removes the rounding residue of the first
    let residue = values.iter().sum::<f64>() / n;
    values.iter_mut().for_each(|v| *v -= residue);
    RateSignal {
        values,
        kind: RateKind::ZeroMean,
        ..rate.clone()
    }
}
