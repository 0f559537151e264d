//! Per-step timing of the three decision engines.

use std::fmt::Write as _;
use std::time::Instant;

use rand::{rngs::StdRng, Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::controller::{ControllerInputs, MultirateController, EXHAUSTIVE_MAX_SUBINTERVALS};
use crate::converter::{CapacitorDifferences, SwitchingState};
use crate::error::{Error, Result};
use crate::harness::TimingStats;
use crate::predictor::{full_period_model, SubintervalGrid};
use crate::scenario::Scenario;

const SCALING_ROUNDS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchEntry {
    pub engine: String,
    pub subintervals: usize,
    pub candidates_per_step: u64,
    pub timing: TimingStats,
    /// Candidates evaluated per second, from the mean step time.
    pub candidates_per_second: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub iterations: usize,
    pub entries: Vec<BenchEntry>,
    /// Greedy step time for uniform grids with 1..=8 subintervals: the
    /// smallest median over several interleaved rounds.
    pub scaling: Vec<(usize, f64)>,
    /// Least-squares slope of log(time) against log(subintervals).
    pub scaling_exponent: f64,
}

impl BenchReport {
    pub fn entry(&self, engine: &str) -> Option<&BenchEntry> {
        self.entries.iter().find(|e| e.engine == engine)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<12} {:>3} {:>10} {:>12} {:>12} {:>12} {:>14}",
            "engine", "N", "cand/step", "mean_us", "median_us", "p99_us", "cand/s"
        );
        for e in &self.entries {
            let _ = writeln!(
                out,
                "{:<12} {:>3} {:>10} {:>12.3} {:>12.3} {:>12.3} {:>14.3e}",
                e.engine,
                e.subintervals,
                e.candidates_per_step,
                e.timing.mean_ns / 1e3,
                e.timing.median_ns / 1e3,
                e.timing.p99_ns / 1e3,
                e.candidates_per_second
            );
        }
        let _ = writeln!(out, "multirate scaling (uniform grids):");
        for (n, t) in &self.scaling {
            let _ = writeln!(out, "  N = {n}: median {:.3} us", t / 1e3);
        }
        let _ = writeln!(out, "  log-log slope = {:.3}", self.scaling_exponent);
        out
    }
}

fn random_inputs(rng: &mut StdRng, amplitude: f64) -> ControllerInputs {
    let a = amplitude.max(1.0);
    ControllerInputs {
        i_m: std::array::from_fn(|_| rng.gen_range(-a..a)),
        v_dm: CapacitorDifferences::new(
            rng.gen_range(-20.0..20.0),
            rng.gen_range(-20.0..20.0),
            rng.gen_range(-20.0..20.0),
        ),
        u_m: SwitchingState::from_index(rng.gen_range(0..SwitchingState::COUNT)).unwrap(),
        i_ref: std::array::from_fn(|_| rng.gen_range(-a..a)),
    }
}

fn time_steps<F: FnMut(&ControllerInputs) -> u64>(
    inputs: &[ControllerInputs],
    mut step: F,
) -> (TimingStats, u64) {
    let mut samples = Vec::with_capacity(inputs.len());
    let mut candidates = 0;
    for x in inputs {
        let t = Instant::now();
        candidates = std::hint::black_box(step(std::hint::black_box(x)));
        samples.push(t.elapsed().as_nanos() as u64);
    }
    (TimingStats::from_samples(&samples), candidates)
}

fn entry(engine: &str, n: usize, timing: TimingStats, candidates: u64) -> BenchEntry {
    BenchEntry {
        engine: engine.into(),
        subintervals: n,
        candidates_per_step: candidates,
        timing,
        candidates_per_second: candidates as f64 / (timing.mean_ns * 1e-9),
    }
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(points: &[(usize, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> = points.iter().map(|(x, y)| ((*x as f64).ln(), y.ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

/// Times standard, multirate and (when the grid allows) exhaustive steps on
/// randomised inputs, all on the calling thread.
///
/// `exhaustive_iterations` bounds the exhaustive runs separately since a
/// three-subinterval exhaustive step evaluates nearly two million sequences.
pub fn bench_enumeration(
    scenario: &Scenario,
    iterations: usize,
    exhaustive_iterations: usize,
) -> Result<BenchReport> {
    if iterations == 0 {
        return Err(Error::InvalidParameter {
            name: "iterations",
            requirement: ">= 1",
            value: 0.0,
        });
    }
    let grid = match &scenario.grid {
        Some(g) => g.clone(),
        None => SubintervalGrid::new(vec![0.45, 0.75, 1.0], scenario.ts)?,
    };
    let mut rng = StdRng::seed_from_u64(0x5eed);
    let amplitude = scenario.reference.amplitude;
    let inputs: Vec<ControllerInputs> = (0..iterations).map(|_| random_inputs(&mut rng, amplitude)).collect();

    let mut entries = Vec::new();
    let standard = MultirateController::standard(full_period_model(&scenario.plant, scenario.ts)?, scenario.cost)?;
    let (t, c) = time_steps(&inputs, |x| standard.step(x).candidates_evaluated);
    entries.push(entry("standard", 1, t, c));

    let multirate = MultirateController::new(&scenario.plant, &grid, scenario.cost)?;
    let (t, c) = time_steps(&inputs, |x| multirate.step(x).candidates_evaluated);
    entries.push(entry("multirate", grid.len(), t, c));

    if grid.len() <= EXHAUSTIVE_MAX_SUBINTERVALS && exhaustive_iterations > 0 {
        let few = &inputs[..exhaustive_iterations.min(inputs.len())];
        let (t, c) = time_steps(few, |x| {
            multirate.exhaustive_step(x).map(|d| d.candidates_evaluated).unwrap_or(0)
        });
        entries.push(entry("exhaustive", grid.len(), t, c));
    }
    if grid.len() != 2 && exhaustive_iterations > 0 {
        let two = MultirateController::new(&scenario.plant, &SubintervalGrid::uniform(2, scenario.ts)?, scenario.cost)?;
        let few = &inputs[..exhaustive_iterations.min(inputs.len())];
        let (t, c) = time_steps(few, |x| two.exhaustive_step(x).map(|d| d.candidates_evaluated).unwrap_or(0));
        entries.push(entry("exhaustive", 2, t, c));
    }

    // interleaved rounds over the grid sizes, keeping each size's smallest median
    let controllers = (1..=8)
        .map(|n| MultirateController::new(&scenario.plant, &SubintervalGrid::uniform(n, scenario.ts)?, scenario.cost))
        .collect::<Result<Vec<_>>>()?;
    let mut best = [f64::INFINITY; 8];
    for _ in 0..SCALING_ROUNDS {
        for (slot, ctl) in best.iter_mut().zip(&controllers) {
            let (t, _) = time_steps(&inputs, |x| ctl.step(x).candidates_evaluated);
            *slot = slot.min(t.median_ns);
        }
    }
    let scaling: Vec<(usize, f64)> = best.iter().enumerate().map(|(k, t)| (k + 1, *t)).collect();
    let scaling_exponent = log_log_slope(&scaling);
    Ok(BenchReport {
        iterations,
        entries,
        scaling,
        scaling_exponent,
    })
}
