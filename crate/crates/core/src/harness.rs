//! Closed-loop orchestration and comparison reports.

use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::controller::{ControlDecision, ControllerInputs, MultirateController};
use crate::converter::{SwitchingState, Vec3};
use crate::error::{Error, Result};
use crate::metrics::{balance_stats, commutation_count, thd_three_phase, tracking_rms, BalanceStats};
use crate::plant::run_schedule_logged;
use crate::predictor::{full_period_model, SubintervalGrid};
use crate::runlog::RunLog;
use crate::scenario::{Algorithm, Scenario};

/// Summary statistics of per-step wall-clock times, nanoseconds.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TimingStats {
    pub mean_ns: f64,
    pub median_ns: f64,
    pub p99_ns: f64,
}

impl TimingStats {
    pub fn from_samples(samples: &[u64]) -> Self {
        if samples.is_empty() {
            return TimingStats::default();
        }
        let mut sorted = samples.to_vec();
        sorted.sort_unstable();
        let n = sorted.len();
        let quantile = |q: f64| sorted[((q * n as f64).ceil() as usize).clamp(1, n) - 1] as f64;
        TimingStats {
            mean_ns: sorted.iter().map(|x| *x as f64).sum::<f64>() / n as f64,
            median_ns: quantile(0.5),
            p99_ns: quantile(0.99),
        }
    }
}

/// Steady-state metrics of one log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogMetrics {
    /// Per-phase THD; absent when the fundamental is zero or no full
    /// steady-state period exists.
    pub thd: Option<[f64; 3]>,
    pub thd_mean: Option<f64>,
    /// Mean level distance switched per fundamental period.
    pub commutations_per_period: Option<f64>,
    pub tracking_rms: f64,
    /// Over the whole log, not only steady state.
    pub balance: BalanceStats,
    /// Whole fundamental periods analysed.
    pub analysed_periods: usize,
    pub max_order: usize,
}

/// Options for [`log_metrics`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricOptions {
    pub fundamental_hz: f64,
    pub warmup_periods: usize,
    pub max_order: usize,
    pub band: f64,
}

impl MetricOptions {
    pub fn for_scenario(s: &Scenario) -> Self {
        MetricOptions {
            fundamental_hz: s.reference.frequency,
            warmup_periods: s.warmup_periods,
            max_order: s.max_order,
            band: s.band,
        }
    }
}

/// Computes steady-state metrics: skips the warm-up periods and analyses the
/// remaining whole fundamental periods.
pub fn log_metrics(log: &RunLog, opts: &MetricOptions) -> Result<LogMetrics> {
    log.validate()?;
    let per_period = log.sample_rate / opts.fundamental_hz;
    let whole = per_period.round();
    let balance = balance_stats(log, opts.band);
    let integral = (per_period - whole).abs() <= 1e-6 * per_period && whole >= 1.0;
    let (steady, periods) = if integral {
        let per = whole as usize;
        let start = opts.warmup_periods * per;
        let periods = log.len().saturating_sub(start) / per;
        if periods >= 1 {
            (Some(log.slice(start, periods * per)?), periods)
        } else {
            (None, 0)
        }
    } else {
        (None, 0)
    };
    let Some(steady) = steady else {
        return Ok(LogMetrics {
            thd: None,
            thd_mean: None,
            commutations_per_period: None,
            tracking_rms: tracking_rms(log),
            balance,
            analysed_periods: 0,
            max_order: opts.max_order,
        });
    };
    let (thd, thd_mean) = match thd_three_phase(&steady, opts.fundamental_hz, opts.max_order) {
        Ok((t, m)) => (Some(t), Some(m)),
        Err(Error::ZeroFundamental) => (None, None),
        Err(e) => return Err(e),
    };
    let commutations = commutation_count(&steady, 1.0 / opts.fundamental_hz)?;
    Ok(LogMetrics {
        thd,
        thd_mean,
        commutations_per_period: Some(commutations.mean),
        tracking_rms: tracking_rms(&steady),
        balance,
        analysed_periods: periods,
        max_order: opts.max_order,
    })
}

/// One row of a comparison report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub name: String,
    pub algorithm: Algorithm,
    pub subintervals: usize,
    pub metrics: LogMetrics,
    pub candidates_per_step: u64,
    pub step_time: TimingStats,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    /// Log rounded to CSV precision, so saved logs reproduce the metrics.
    pub log: RunLog,
    pub report: RunReport,
}

enum Engine {
    Greedy(MultirateController),
    Exhaustive(MultirateController),
}

impl Engine {
    fn for_scenario(s: &Scenario) -> Result<Self> {
        Ok(match s.algorithm {
            Algorithm::Standard => {
                Engine::Greedy(MultirateController::standard(full_period_model(&s.plant, s.ts)?, s.cost)?)
            }
            Algorithm::Multirate => Engine::Greedy(MultirateController::new(&s.plant, grid(s)?, s.cost)?),
            Algorithm::Exhaustive => {
                let g = grid(s)?;
                if g.len() > crate::controller::EXHAUSTIVE_MAX_SUBINTERVALS {
                    return Err(Error::TooManySubintervals(g.len()));
                }
                Engine::Exhaustive(MultirateController::new(&s.plant, g, s.cost)?)
            }
        })
    }

    fn controller(&self) -> &MultirateController {
        match self {
            Engine::Greedy(c) | Engine::Exhaustive(c) => c,
        }
    }

    fn step(&self, inputs: &ControllerInputs, refs: Option<&[Vec3]>) -> Result<ControlDecision> {
        match (self, refs) {
            (Engine::Greedy(c), Some(r)) => Ok(c.step_with_references(inputs, r)),
            (Engine::Greedy(c), None) => Ok(c.step(inputs)),
            (Engine::Exhaustive(c), _) => c.exhaustive_step(inputs),
        }
    }
}

fn grid(s: &Scenario) -> Result<&SubintervalGrid> {
    s.grid
        .as_ref()
        .ok_or_else(|| Error::Scenario("subinterval grid required".into()))
}

/// Simulates the scenario: every `Ts` the controller reads the exact plant
/// state, chooses its action schedule, and the plant holds each action for its
/// subinterval.
pub fn run_closed_loop(scenario: &Scenario) -> Result<RunOutcome> {
    scenario.validate()?;
    let engine = Engine::for_scenario(scenario)?;
    let ts = scenario.ts;
    let holds = match scenario.algorithm {
        Algorithm::Standard => vec![ts],
        _ => grid(scenario)?.hold_durations(),
    };
    let offsets = match scenario.algorithm {
        Algorithm::Standard => vec![0.0],
        _ => grid(scenario)?.offsets(),
    };
    let reference = |t: f64| scenario.reference.at(t);

    let mut log = RunLog::new(scenario.log_rate, scenario.initial.t)?;
    let mut state = scenario.initial;
    let mut applied = SwitchingState::ZERO;
    let mut step_ns = Vec::with_capacity(scenario.periods());
    let mut candidates = 0;
    let mut schedule = Vec::with_capacity(holds.len());
    let mut refs = Vec::with_capacity(holds.len());

    for k in 0..scenario.periods() {
        let t_k = scenario.initial.t + k as f64 * ts;
        let inputs = ControllerInputs {
            i_m: state.i,
            v_dm: state.vd,
            u_m: applied,
            i_ref: reference(t_k),
        };
        refs.clear();
        if scenario.reference_per_subinterval {
            refs.extend(offsets.iter().map(|o| reference(t_k + o)));
        }
        let started = Instant::now();
        let decision = engine.step(&inputs, scenario.reference_per_subinterval.then_some(&refs[..]))?;
        step_ns.push(started.elapsed().as_nanos() as u64);
        candidates = decision.candidates_evaluated;

        schedule.clear();
        schedule.extend(decision.actions.iter().zip(&holds).map(|((u, _), dt)| (*u, *dt)));
        state = run_schedule_logged(&state, &schedule, &scenario.plant, &mut log, &reference)
            .map_err(|e| match e {
                Error::NonFinite { .. } => Error::NonFinite { t: t_k },
                other => other,
            })?;
        applied = schedule.last().map(|(u, _)| *u).unwrap_or(applied);
    }

    let log = log.quantized();
    let metrics = log_metrics(&log, &MetricOptions::for_scenario(scenario))?;
    Ok(RunOutcome {
        log,
        report: RunReport {
            name: scenario.name.clone(),
            algorithm: scenario.algorithm,
            subintervals: engine.controller().subintervals(),
            metrics,
            candidates_per_step: candidates,
            step_time: TimingStats::from_samples(&step_ns),
        },
    })
}

/// Result of running several scenarios side by side, in input order.
#[derive(Debug, Clone)]
pub struct ComparisonReport {
    pub rows: Vec<std::result::Result<RunReport, (String, String)>>,
}

impl ComparisonReport {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.is_err()).count()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<16} {:<10} {:>3} {:>8} {:>8} {:>8} {:>8} {:>10} {:>9} {:>10} {:>11} {:>10} {:>10}",
            "name", "algorithm", "N", "thd_a%", "thd_b%", "thd_c%", "thd%", "comm/per", "rms_A",
            "max|vd|_V", "cand/step", "median_us", "p99_us"
        );
        for row in &self.rows {
            match row {
                Ok(r) => {
                    let m = &r.metrics;
                    let pct = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{:.3}", 100.0 * x));
                    let thd = m.thd.map(|t| t.map(Some)).unwrap_or([None; 3]);
                    let vd_max = m.balance.max_abs.iter().fold(0.0f64, |a, b| a.max(*b));
                    let _ = writeln!(
                        out,
                        "{:<16} {:<10} {:>3} {:>8} {:>8} {:>8} {:>8} {:>10} {:>9.4} {:>10.3} {:>11} {:>10.2} {:>10.2}",
                        r.name,
                        r.algorithm.as_str(),
                        r.subintervals,
                        pct(thd[0]),
                        pct(thd[1]),
                        pct(thd[2]),
                        pct(m.thd_mean),
                        m.commutations_per_period.map_or("-".into(), |c| format!("{c:.1}")),
                        m.tracking_rms,
                        vd_max,
                        r.candidates_per_step,
                        r.step_time.median_ns / 1e3,
                        r.step_time.p99_ns / 1e3,
                    );
                }
                Err((name, msg)) => {
                    let _ = writeln!(out, "{name:<16} FAILED: {msg}");
                }
            }
        }
        out
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "name", "algorithm", "subintervals", "status", "thd_a", "thd_b", "thd_c", "thd_mean",
            "commutations_per_period", "tracking_rms_A", "vd1_max_V", "vd2_max_V", "vd3_max_V",
            "vd1_end_V", "vd2_end_V", "vd3_end_V", "time_to_band_s", "analysed_periods", "max_order",
            "candidates_per_step", "step_mean_ns", "step_median_ns", "step_p99_ns",
        ])?;
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.9e}"));
        for row in &self.rows {
            match row {
                Ok(r) => {
                    let m = &r.metrics;
                    let thd = m.thd.map(|t| t.map(Some)).unwrap_or([None; 3]);
                    let mut rec = vec![
                        r.name.clone(),
                        r.algorithm.as_str().to_string(),
                        r.subintervals.to_string(),
                        "ok".into(),
                    ];
                    rec.extend(thd.iter().map(|t| opt(*t)));
                    rec.push(opt(m.thd_mean));
                    rec.push(opt(m.commutations_per_period));
                    rec.push(format!("{:.9e}", m.tracking_rms));
                    rec.extend(m.balance.max_abs.iter().map(|v| format!("{v:.9e}")));
                    rec.extend(m.balance.terminal_abs.iter().map(|v| format!("{v:.9e}")));
                    rec.push(opt(m.balance.time_to_band));
                    rec.push(m.analysed_periods.to_string());
                    rec.push(m.max_order.to_string());
                    rec.push(r.candidates_per_step.to_string());
                    rec.push(format!("{:.1}", r.step_time.mean_ns));
                    rec.push(format!("{:.1}", r.step_time.median_ns));
                    rec.push(format!("{:.1}", r.step_time.p99_ns));
                    w.write_record(&rec)?;
                }
                Err((name, msg)) => {
                    let mut rec = vec![name.clone(), String::new(), String::new(), format!("error: {msg}")];
                    rec.extend(std::iter::repeat_n(String::new(), 19));
                    w.write_record(&rec)?;
                }
            }
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

/// Runs every scenario in order; failures are recorded per row.
pub fn compare(scenarios: &[Scenario]) -> (ComparisonReport, Vec<Option<RunLog>>) {
    let mut rows = Vec::with_capacity(scenarios.len());
    let mut logs = Vec::with_capacity(scenarios.len());
    for s in scenarios {
        match run_closed_loop(s) {
            Ok(out) => {
                rows.push(Ok(out.report));
                logs.push(Some(out.log));
            }
            Err(e) => {
                rows.push(Err((s.name.clone(), e.to_string())));
                logs.push(None);
            }
        }
    }
    (ComparisonReport { rows }, logs)
}
