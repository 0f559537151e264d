//! Uniformly sampled closed-loop trajectories and their CSV form.

use std::io::{Read, Write};

use crate::converter::{CapacitorDifferences, SwitchingState, Vec3};
use crate::error::{positive, Error, Result};

pub const CSV_HEADER: [&str; 13] = [
    "t_s", "ia_A", "ib_A", "ic_A", "ua_lvl", "ub_lvl", "uc_lvl", "vd1_V", "vd2_V", "vd3_V",
    "iaref_A", "ibref_A", "icref_A",
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    /// Samples per second.
    pub sample_rate: f64,
    /// Time of the first sample, seconds.
    pub t0: f64,
    pub currents: [Vec<f64>; 3],
    pub levels: [Vec<i8>; 3],
    pub vd: [Vec<f64>; 3],
    pub reference: [Vec<f64>; 3],
}

impl RunLog {
    pub fn new(sample_rate: f64, t0: f64) -> Result<Self> {
        positive("sample_rate", sample_rate)?;
        Ok(RunLog {
            sample_rate,
            t0,
            currents: Default::default(),
            levels: Default::default(),
            vd: Default::default(),
            reference: Default::default(),
        })
    }

    pub fn len(&self) -> usize {
        self.currents[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Time of sample `n`.
    pub fn time_of(&self, n: usize) -> f64 {
        self.t0 + n as f64 / self.sample_rate
    }

    /// Duration covered by the samples, `len / sample_rate`.
    pub fn duration(&self) -> f64 {
        self.len() as f64 / self.sample_rate
    }

    pub fn push(
        &mut self,
        _t: f64,
        i: &Vec3,
        u: &SwitchingState,
        vd: &CapacitorDifferences,
        reference: &Vec3,
    ) {
        let levels = u.levels();
        let vd = vd.as_array();
        for k in 0..3 {
            self.currents[k].push(i[k]);
            self.levels[k].push(levels[k] as i8);
            self.vd[k].push(vd[k]);
            self.reference[k].push(reference[k]);
        }
    }

    /// Samples `start..start + len` as a new log.
    pub fn slice(&self, start: usize, len: usize) -> Result<RunLog> {
        let end = start + len;
        if end > self.len() {
            return Err(Error::RunLog(format!(
                "slice {start}..{end} out of range for {} samples",
                self.len()
            )));
        }
        let cut_f = |v: &[Vec<f64>; 3]| -> [Vec<f64>; 3] {
            std::array::from_fn(|k| v[k][start..end].to_vec())
        };
        Ok(RunLog {
            sample_rate: self.sample_rate,
            t0: self.time_of(start),
            currents: cut_f(&self.currents),
            levels: std::array::from_fn(|k| self.levels[k][start..end].to_vec()),
            vd: cut_f(&self.vd),
            reference: cut_f(&self.reference),
        })
    }

    /// Checks array lengths and level range.
    pub fn validate(&self) -> Result<()> {
        positive("sample_rate", self.sample_rate)?;
        let n = self.len();
        let same = (0..3).all(|k| {
            self.currents[k].len() == n
                && self.levels[k].len() == n
                && self.vd[k].len() == n
                && self.reference[k].len() == n
        });
        if !same {
            return Err(Error::RunLog("column lengths differ".into()));
        }
        if self.levels.iter().flatten().any(|l| !(-2..=2).contains(l)) {
            return Err(Error::RunLog("level outside -2..=2".into()));
        }
        Ok(())
    }

    /// Rounds every real-valued column to the precision stored in CSV, so
    /// metrics computed from the result equal those computed after a CSV
    /// round trip.
    pub fn quantized(&self) -> RunLog {
        let q = |v: &[Vec<f64>; 3]| -> [Vec<f64>; 3] {
            std::array::from_fn(|k| v[k].iter().map(|x| quantize(*x)).collect())
        };
        RunLog {
            sample_rate: self.sample_rate,
            t0: self.t0,
            currents: q(&self.currents),
            levels: self.levels.clone(),
            vd: q(&self.vd),
            reference: q(&self.reference),
        }
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(CSV_HEADER)?;
        let mut row: Vec<String> = Vec::with_capacity(13);
        for n in 0..self.len() {
            row.clear();
            row.push(format_sig9(self.time_of(n)));
            row.extend(self.currents.iter().map(|c| format_sig9(c[n])));
            row.extend(self.levels.iter().map(|l| l[n].to_string()));
            row.extend(self.vd.iter().map(|v| format_sig9(v[n])));
            row.extend(self.reference.iter().map(|r| format_sig9(r[n])));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Parses a log written by [`RunLog::write_csv`]. The sample rate is
    /// recovered from the time column.
    pub fn read_csv<R: Read>(reader: R) -> Result<RunLog> {
        let mut r = csv::Reader::from_reader(reader);
        let header = r.headers()?.clone();
        if header.iter().collect::<Vec<_>>() != CSV_HEADER {
            return Err(Error::RunLog(format!("unexpected header: {header:?}")));
        }
        let mut times = Vec::new();
        let mut log = RunLog::new(1.0, 0.0)?;
        for (line, record) in r.records().enumerate() {
            let record = record?;
            let real = |col: usize| -> Result<f64> {
                record[col]
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::RunLog(format!("row {}: column {col}: {e}", line + 2)))
            };
            times.push(real(0)?);
            for k in 0..3 {
                log.currents[k].push(real(1 + k)?);
                let level: i8 = record[4 + k]
                    .trim()
                    .parse()
                    .map_err(|e| Error::RunLog(format!("row {}: level: {e}", line + 2)))?;
                log.levels[k].push(level);
                log.vd[k].push(real(7 + k)?);
                log.reference[k].push(real(10 + k)?);
            }
        }
        if times.len() < 2 {
            return Err(Error::RunLog("need at least two samples to recover the sample rate".into()));
        }
        let span = times[times.len() - 1] - times[0];
        let mut rate = (times.len() - 1) as f64 / span;
        if (rate - rate.round()).abs() < 1e-6 * rate {
            rate = rate.round();
        }
        log.sample_rate = rate;
        log.t0 = times[0];
        log.validate()?;
        Ok(log)
    }
}

/// Decimal representation with nine significant digits.
pub fn format_sig9(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { "0".to_string() } else { x.to_string() };
    }
    let exponent = x.abs().log10().floor() as i32;
    let decimals = (8 - exponent).clamp(0, 40) as usize;
    format!("{x:.decimals$}")
}

/// Value after a [`format_sig9`] round trip.
pub fn quantize(x: f64) -> f64 {
    format_sig9(x).parse().unwrap_or(x)
}
