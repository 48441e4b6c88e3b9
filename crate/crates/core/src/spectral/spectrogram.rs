use std::io::Write;

use super::{periodogram_values, PsdEstimate};
use crate::error::{Error, Result};
use crate::rate::RateSignal;

/// Short-time periodograms over a sliding rectangular window.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub window_len: usize,
    pub hop: usize,
    pub columns: Vec<PsdEstimate>,
    /// Center time of each column's span, seconds.
    pub column_times_s: Vec<f64>,
}

impl Spectrogram {
    /// Long-format CSV `t_s,f_hz,power`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t_s,f_hz,power")?;
        for (col, t) in self.columns.iter().zip(&self.column_times_s) {
            for (j, p) in col.power.iter().enumerate() {
                writeln!(w, "{t},{},{p}", col.frequency(j))?;
            }
        }
        Ok(())
    }

    /// Peak frequency of every column, DC excluded.
    pub fn peak_frequencies(&self) -> Vec<f64> {
        self.columns
            .iter()
            .map(|c| c.argmax_from(1).map_or(0.0, |j| c.frequency(j)))
            .collect()
    }
}

pub fn spectrogram(rate: &RateSignal, window_len: usize, hop: usize) -> Result<Spectrogram> {
    let n = rate.len();
    if hop == 0 {
        return Err(Error::Param("spectrogram hop must be at least 1".into()));
    }
    if window_len < 2 || window_len > n {
        return Err(Error::Param(format!(
            "spectrogram window of {window_len} bins must lie in [2, {n}]"
        )));
    }
    let count = (n - window_len) / hop + 1;
    let mut columns = Vec::with_capacity(count);
    let mut column_times_s = Vec::with_capacity(count);
    for c in 0..count {
        let start = c * hop;
        columns.push(periodogram_values(
            &rate.values[start..start + window_len],
            rate.bin_width_s,
        )?);
        column_times_s.push(
            rate.t0_us as f64 * 1e-6 + (start as f64 + window_len as f64 / 2.0) * rate.bin_width_s,
        );
    }
    Ok(Spectrogram {
        window_len,
        hop,
        columns,
        column_times_s,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rate::RateKind;
    use std::f64::consts::PI;

    fn rate_from(values: Vec<f64>) -> RateSignal {
        RateSignal {
            bin_width_s: 0.01,
            t0_us: 0,
            r_on: vec![0; values.len()],
            r_off: vec![0; values.len()],
            values,
            kind: RateKind::Signed,
        }
    }

    #[test]
    fn stationary_sine_peaks_at_two_hz_everywhere() {
        let values = (0..6000)
            .map(|k| (2.0 * PI * 2.0 * k as f64 * 0.01).sin())
            .collect();
        let s = spectrogram(&rate_from(values), 500, 100).unwrap();
        assert_eq!(s.columns.len(), (6000 - 500) / 100 + 1);
        for f in s.peak_frequencies() {
            assert!((f - 2.0).abs() < 1e-9);
        }
        assert!((s.column_times_s[0] - 2.5).abs() < 1e-12);
        assert!((s.column_times_s[1] - 3.5).abs() < 1e-12);
    }

    #[test]
    fn short_signal_is_rejected() {
        assert!(spectrogram(&rate_from(vec![0.0; 100]), 500, 100).is_err());
        assert!(spectrogram(&rate_from(vec![0.0; 600]), 500, 0).is_err());
    }

    #[test]
    fn chirp_peaks_rise() {
        // instantaneous frequency 1 + 4 t / T Hz over T = 60 s
        let n = 6000;
        let dt = 0.01;
        let total = n as f64 * dt;
        let values = (0..n)
            .map(|k| {
                let t = k as f64 * dt;
                (2.0 * PI * (t + 2.0 * t * t / total)).sin()
            })
            .collect();
        let s = spectrogram(&rate_from(values), 500, 100).unwrap();
        let peaks = s.peak_frequencies();
        let df = s.columns[0].df;
        for pair in peaks.windows(2) {
            assert!(pair[1] >= pair[0] - df - 1e-9, "{pair:?}");
        }
        assert!(peaks[0] < 1.6 && *peaks.last().unwrap() > 4.4);
    }
}
