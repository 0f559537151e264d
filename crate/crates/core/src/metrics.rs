//! Figures of merit computed from a [`RunLog`].

use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use crate::runlog::RunLog;

/// Harmonic content of one phase current.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    pub fundamental_hz: f64,
    /// Peak amplitude of the fundamental, A.
    pub fundamental_amplitude: f64,
    /// Mean value of the record, A.
    pub dc: f64,
    /// Amplitudes relative to the fundamental, indexed by harmonic order;
    /// entry 0 is the DC value relative to the fundamental.
    pub magnitudes: Vec<f64>,
    /// Highest harmonic order included.
    pub max_order: usize,
    /// Total harmonic distortion as a fraction.
    pub thd: f64,
}

impl SpectrumReport {
    /// Mean-square value of the reconstructed series (DC plus harmonics).
    pub fn series_power(&self) -> f64 {
        let a1 = self.fundamental_amplitude;
        self.dc * self.dc
            + self.magnitudes[1..]
                .iter()
                .map(|m| (m * a1) * (m * a1) / 2.0)
                .sum::<f64>()
    }
}

/// Number of whole fundamental periods in the log, or an error.
fn whole_periods(samples: usize, sample_rate: f64, fundamental_hz: f64) -> Result<usize> {
    let periods = samples as f64 * fundamental_hz / sample_rate;
    let rounded = periods.round();
    if rounded < 1.0 || (periods - rounded).abs() > 1e-6 {
        return Err(Error::NonIntegerPeriods { samples });
    }
    Ok(rounded as usize)
}

/// Harmonic spectrum of one phase over an integer number of fundamental
/// periods, using a rectangular window.
pub fn harmonic_spectrum(
    log: &RunLog,
    phase: usize,
    fundamental_hz: f64,
    max_order: usize,
) -> Result<SpectrumReport> {
    assert!(phase < 3, "phase index must be 0, 1 or 2");
    harmonic_spectrum_of(&log.currents[phase], log.sample_rate, fundamental_hz, max_order)
}

/// Harmonic spectrum of a uniformly sampled signal.
pub fn harmonic_spectrum_of(
    samples: &[f64],
    sample_rate: f64,
    fundamental_hz: f64,
    max_order: usize,
) -> Result<SpectrumReport> {
    if max_order < 1 || sample_rate <= 2.0 * max_order as f64 * fundamental_hz {
        return Err(Error::Undersampled {
            sample_rate,
            max_order,
            fundamental_hz,
        });
    }
    let periods = whole_periods(samples.len(), sample_rate, fundamental_hz)?;
    let n = samples.len();
    let mut buf: Vec<Complex<f64>> = samples.iter().map(|x| Complex::new(*x, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);

    let scale = 1.0 / n as f64;
    let dc = buf[0].re * scale;
    let amplitude = |h: usize| 2.0 * buf[h * periods].norm() * scale;
    let a1 = amplitude(1);
    if a1 == 0.0 || !a1.is_finite() {
        return Err(Error::ZeroFundamental);
    }
    let mut magnitudes = Vec::with_capacity(max_order + 1);
    magnitudes.push(dc.abs() / a1);
    magnitudes.extend((1..=max_order).map(|h| amplitude(h) / a1));
    magnitudes[1] = 1.0;
    let thd = magnitudes[2..].iter().map(|m| m * m).sum::<f64>().sqrt();
    Ok(SpectrumReport {
        fundamental_hz,
        fundamental_amplitude: a1,
        dc,
        magnitudes,
        max_order,
        thd,
    })
}

/// THD of each phase and their mean.
pub fn thd_three_phase(log: &RunLog, fundamental_hz: f64, max_order: usize) -> Result<([f64; 3], f64)> {
    let mut thd = [0.0; 3];
    for (k, slot) in thd.iter_mut().enumerate() {
        *slot = harmonic_spectrum(log, k, fundamental_hz, max_order)?.thd;
    }
    Ok((thd, (thd[0] + thd[1] + thd[2]) / 3.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommutationReport {
    /// Level distance switched in each full window.
    pub per_window: Vec<u64>,
    pub mean: f64,
}

/// Total level distance `sum |delta u|` over all phases, per window.
///
/// The transition into sample `n` is charged to the window containing `n`;
/// a trailing partial window is dropped.
pub fn commutation_count(log: &RunLog, window: f64) -> Result<CommutationReport> {
    let exact = window * log.sample_rate;
    let per = exact.round();
    if per < 1.0 || (exact - per).abs() > 1e-6 * exact.max(1.0) {
        return Err(Error::WindowNotMultiple(window));
    }
    let per = per as usize;
    if per > log.len() {
        return Err(Error::WindowTooLong {
            window,
            length: log.duration(),
        });
    }
    let windows = log.len() / per;
    let mut counts = vec![0u64; windows];
    for levels in &log.levels {
        for n in 1..windows * per {
            counts[n / per] += (levels[n] as i32 - levels[n - 1] as i32).unsigned_abs() as u64;
        }
    }
    let mean = counts.iter().sum::<u64>() as f64 / windows as f64;
    Ok(CommutationReport {
        per_window: counts,
        mean,
    })
}

/// RMS of `current - reference` over all phases and samples.
pub fn tracking_rms(log: &RunLog) -> f64 {
    let n = log.len();
    if n == 0 {
        return 0.0;
    }
    let sum: f64 = (0..3)
        .flat_map(|k| {
            log.currents[k]
                .iter()
                .zip(&log.reference[k])
                .map(|(i, r)| (i - r) * (i - r))
        })
        .sum();
    (sum / (3 * n) as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceStats {
    /// Largest `|vd_k|` over the log, V.
    pub max_abs: [f64; 3],
    /// `|vd_k|` at the last sample, V.
    pub terminal_abs: [f64; 3],
    /// Time after the log start from which every component stays within the
    /// band; `None` if the last sample is outside it.
    pub time_to_band: Option<f64>,
    pub band: f64,
}

pub fn balance_stats(log: &RunLog, band: f64) -> BalanceStats {
    let n = log.len();
    let mut max_abs = [0.0f64; 3];
    let mut terminal_abs = [0.0f64; 3];
    let mut last_violation: Option<usize> = None;
    for k in 0..3 {
        for (idx, v) in log.vd[k].iter().enumerate() {
            max_abs[k] = max_abs[k].max(v.abs());
            if v.abs() > band && last_violation.is_none_or(|l| idx > l) {
                last_violation = Some(idx);
            }
        }
        if let Some(v) = log.vd[k].last() {
            terminal_abs[k] = v.abs();
        }
    }
    let time_to_band = match last_violation {
        None => Some(0.0),
        Some(idx) if idx + 1 < n => Some((idx + 1) as f64 / log.sample_rate),
        Some(_) => None,
    };
    BalanceStats {
        max_abs,
        terminal_abs,
        time_to_band,
        band,
    }
}
