//! Acceptance suite. Each criterion prints one `PASS`/`FAIL` line; the
//! process exits nonzero if any criterion fails.

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

use rand::{rngs::StdRng, Rng, SeedableRng};

use dcc_mpc::bench::bench_enumeration;
use dcc_mpc::harness::{log_metrics, MetricOptions};
use dcc_mpc::metrics::{commutation_count, harmonic_spectrum_of};
use dcc_mpc::{
    exhaustive_multirate_step, full_period_model, hold_input, multirate_mpc_step, run_closed_loop,
    standard_mpc_step, subinterval_models, Algorithm, CapacitorDifferences, CapacitorVoltages,
    ControllerInputs, CostConfig, MultirateController, Neutral, PhaseLevel, PlantParams,
    PlantState, RunLog, RunReport, Scenario, SubintervalGrid, SwitchingState, TrackingNorm,
};

type Verdict = (bool, String);

fn random_inputs(rng: &mut StdRng) -> ControllerInputs {
    ControllerInputs {
        i_m: std::array::from_fn(|_| rng.gen_range(-15.0..15.0)),
        v_dm: CapacitorDifferences::new(
            rng.gen_range(-25.0..25.0),
            rng.gen_range(-25.0..25.0),
            rng.gen_range(-25.0..25.0),
        ),
        u_m: SwitchingState::from_index(rng.gen_range(0..SwitchingState::COUNT)).unwrap(),
        i_ref: std::array::from_fn(|_| rng.gen_range(-15.0..15.0)),
    }
}

fn reports() -> (RunReport, RunReport, f64, f64) {
    let t = Instant::now();
    let standard = run_closed_loop(&Scenario::reference_standard()).expect("standard run");
    let t_std = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let multirate = run_closed_loop(&Scenario::reference_multirate()).expect("multirate run");
    let t_mr = t.elapsed().as_secs_f64();
    (standard.report, multirate.report, t_std, t_mr)
}

fn criterion_1() -> Verdict {
    let (s, m, t_s, t_m) = reports();
    let (thd_s, thd_m) = (s.metrics.thd_mean.unwrap(), m.metrics.thd_mean.unwrap());
    let (com_s, com_m) = (
        s.metrics.commutations_per_period.unwrap(),
        m.metrics.commutations_per_period.unwrap(),
    );
    let pass = thd_m < thd_s && com_m > com_s && t_s <= 60.0 && t_m <= 60.0;
    (
        pass,
        format!(
            "THD {:.3}% (multirate) vs {:.3}% (standard); commutations {:.1} vs {:.1}; runtime {:.2} s / {:.2} s",
            100.0 * thd_m,
            100.0 * thd_s,
            com_m,
            com_s,
            t_m,
            t_s
        ),
    )
}

fn criterion_2() -> Verdict {
    let (s, m, _, _) = reports();
    let thd_s = 100.0 * s.metrics.thd_mean.unwrap();
    let thd_m = 100.0 * m.metrics.thd_mean.unwrap();
    let com_s = s.metrics.commutations_per_period.unwrap();
    let com_m = m.metrics.commutations_per_period.unwrap();
    let checks = [
        (thd_s - 4.53).abs() <= 1.5,
        (thd_m - 2.52).abs() <= 1.0,
        (com_s - 456.0).abs() <= 0.3 * 456.0,
        (com_m - 2083.0).abs() <= 0.3 * 2083.0,
    ];
    (
        checks.iter().all(|c| *c),
        format!(
            "standard THD {thd_s:.3}% (target 4.53 +/- 1.5), multirate THD {thd_m:.3}% (target 2.52 +/- 1.0), \
             commutations {com_s:.1} (target 456 +/- 30%) and {com_m:.1} (target 2083 +/- 30%)"
        ),
    )
}

fn criterion_3() -> Verdict {
    let short = |mut s: Scenario, name: &str| {
        s.name = name.into();
        s.duration = 0.02;
        s.warmup_periods = 0;
        s
    };
    let mut scenarios = vec![short(Scenario::reference_standard(), "nominal")];
    let mut floating = short(Scenario::reference_standard(), "floating");
    floating.plant.neutral = Neutral::Floating;
    floating.initial = PlantState::new(0.0, [2.0, -1.0, -1.0], CapacitorDifferences::new(20.0, -10.0, 10.0));
    scenarios.push(floating);
    let mut l2 = short(Scenario::reference_standard(), "l2sq");
    l2.cost.tracking_norm = TrackingNorm::L2sq;
    l2.reference.amplitude = 7.5;
    l2.reference.frequency = 62.5;
    l2.duration = 0.016;
    l2.plant.capacitor_coupling = false;
    scenarios.push(l2);
    let mut slow = short(Scenario::reference_standard(), "slow");
    slow.ts = 50e-6;
    slow.plant.r = 10.0;
    scenarios.push(slow);

    let mut identical = 0;
    for s in &scenarios {
        let std_log = run_closed_loop(s).expect("standard").log;
        let mut one = s.clone().with_grid(vec![1.0]).unwrap();
        one.algorithm = Algorithm::Multirate;
        let one_log = run_closed_loop(&one).expect("single subinterval").log;
        if logs_identical(&std_log, &one_log) {
            identical += 1;
        }
    }
    (
        identical == scenarios.len() && identical >= 3,
        format!("{identical}/{} scenarios bit-identical", scenarios.len()),
    )
}

fn logs_identical(a: &RunLog, b: &RunLog) -> bool {
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    a.len() == b.len()
        && a.sample_rate.to_bits() == b.sample_rate.to_bits()
        && (0..3).all(|k| {
            bits(&a.currents[k]) == bits(&b.currents[k])
                && a.levels[k] == b.levels[k]
                && bits(&a.vd[k]) == bits(&b.vd[k])
                && bits(&a.reference[k]) == bits(&b.reference[k])
        })
}

fn criterion_4() -> Verdict {
    let params = PlantParams::default();
    let grid = SubintervalGrid::uniform(2, 20e-6).unwrap();
    let cfg = Scenario::default().cost;
    let mut rng = StdRng::seed_from_u64(4);
    let (mut violations, mut strict, mut worst_gap) = (0, 0, 0.0f64);
    let trials = 1000;
    for _ in 0..trials {
        let x = random_inputs(&mut rng);
        let greedy = multirate_mpc_step(&x, &grid, &params, &cfg).unwrap().total_cost();
        let best = exhaustive_multirate_step(&x, &grid, &params, &cfg).unwrap().total_cost();
        if best > greedy {
            violations += 1;
        }
        if best < greedy {
            strict += 1;
            worst_gap = worst_gap.max(greedy - best);
        }
    }
    (
        violations == 0 && strict >= 1,
        format!("{trials} inputs: {violations} violations, {strict} strictly better (largest gap {worst_gap:.4})"),
    )
}

/// Independent brute force over all level triples, with its own cost.
fn brute_force(x: &ControllerInputs, cfg: &CostConfig, a: f64, b: f64, ts: f64) -> (SwitchingState, f64) {
    let w = cfg.weights;
    let vdm = x.v_dm.as_array();
    let mut best: Option<(SwitchingState, f64)> = None;
    for ua in -2..=2 {
        for ub in -2..=2 {
            for uc in -2..=2 {
                let u = [ua, ub, uc];
                let i: Vec<f64> = (0..3).map(|k| a * x.i_m[k] + b * u[k] as f64).collect();
                let track: f64 = (0..3).map(|k| (i[k] - x.i_ref[k]).abs()).sum();
                let prev = x.u_m.levels();
                let sw: i32 = (0..3).map(|k| (u[k] - prev[k]).abs()).sum();
                // vd1: -f1-f5, vd2: -f1-f2-f4-f5, vd3: f4 over the level rows
                let mut dvd = [0.0; 3];
                for k in 0..3 {
                    let (c1, c2, c3) = match u[k] {
                        -2 | 2 => (-1.0, -1.0, 0.0),
                        -1 => (0.0, -1.0, 0.0),
                        1 => (0.0, -1.0, 1.0),
                        _ => (0.0, 0.0, 0.0),
                    };
                    let s = ts / cfg.capacitance * i[k];
                    dvd[0] += c1 * s;
                    dvd[1] += c2 * s;
                    dvd[2] += c3 * s;
                }
                let vd_next: Vec<f64> = (0..3).map(|r| vdm[r] + dvd[r]).collect();
                let bal: f64 = (0..3).map(|r| (vd_next[r] - vdm[r]) * vdm[r]).sum();
                let cost = w.lambda_i * track + w.lambda_s * sw as f64 + w.lambda_c * bal;
                if best.is_none_or(|(_, c)| cost < c) {
                    best = Some((SwitchingState::new(ua, ub, uc).unwrap(), cost));
                }
            }
        }
    }
    best.unwrap()
}

fn criterion_5() -> Verdict {
    let params = PlantParams::default();
    let model = full_period_model(&params, 20e-6).unwrap();
    let cfg = Scenario::default().cost;
    let mut rng = StdRng::seed_from_u64(5);
    let trials = 10_000;
    let (mut same_u, mut same_cost) = (0, 0);
    for _ in 0..trials {
        let x = random_inputs(&mut rng);
        let d = standard_mpc_step(&x, &model, &cfg).unwrap();
        let (u, cost) = brute_force(&x, &cfg, model.a, model.b, model.dt);
        if d.states()[0] == u {
            same_u += 1;
        }
        if d.total_cost() == cost {
            same_cost += 1;
        }
    }
    (
        same_u == trials && same_cost == trials,
        format!("{trials} inputs: {same_u} same state, {same_cost} same cost"),
    )
}

/// Fixed-step RK4 on the coupled current and capacitor-difference dynamics.
fn rk4(state: &PlantState, u: &SwitchingState, dt: f64, params: &PlantParams, h: f64) -> PlantState {
    let deriv = |y: &[f64; 6]| -> [f64; 6] {
        let caps = if params.capacitor_coupling {
            CapacitorVoltages::from_differences(params.v_dc, &CapacitorDifferences::new(y[3], y[4], y[5]))
        } else {
            CapacitorVoltages::balanced(params.v_dc)
        };
        let mut v: Vec<f64> = u.0.iter().map(|l| dcc_mpc::phase_voltage(*l, &caps)).collect();
        if params.neutral == Neutral::Floating {
            let m = (v[0] + v[1] + v[2]) / 3.0;
            v.iter_mut().for_each(|x| *x -= m);
        }
        let mut d = [0.0; 6];
        for k in 0..3 {
            d[k] = (v[k] - params.r * y[k]) / params.l;
            let col = dcc_mpc::balancing_column(u.0[k]);
            for r in 0..3 {
                d[3 + r] += col[r] as f64 * y[k] / params.c;
            }
        }
        d
    };
    let mut y = [state.i[0], state.i[1], state.i[2], state.vd.vd1, state.vd.vd2, state.vd.vd3];
    let steps = (dt / h).round() as usize;
    let h = dt / steps as f64;
    let shift = |y: &[f64; 6], k: &[f64; 6], a: f64| -> [f64; 6] { std::array::from_fn(|n| y[n] + a * k[n]) };
    for _ in 0..steps {
        let k1 = deriv(&y);
        let k2 = deriv(&shift(&y, &k1, h / 2.0));
        let k3 = deriv(&shift(&y, &k2, h / 2.0));
        let k4 = deriv(&shift(&y, &k3, h));
        for n in 0..6 {
            y[n] += h / 6.0 * (k1[n] + 2.0 * k2[n] + 2.0 * k3[n] + k4[n]);
        }
    }
    PlantState::new(state.t + dt, [y[0], y[1], y[2]], CapacitorDifferences::new(y[3], y[4], y[5]))
}

fn criterion_6() -> Verdict {
    let mut rng = StdRng::seed_from_u64(6);
    let (mut worst_i, mut worst_vd, mut worst_semi) = (0.0f64, 0.0f64, 0.0f64);
    for n in 0..100 {
        let params = PlantParams {
            capacitor_coupling: n % 4 != 3,
            neutral: if n % 2 == 0 { Neutral::Tied } else { Neutral::Floating },
            ..PlantParams::default()
        };
        let s = PlantState::new(
            0.0,
            std::array::from_fn(|_| rng.gen_range(-20.0..20.0)),
            CapacitorDifferences::new(
                rng.gen_range(-30.0..30.0),
                rng.gen_range(-30.0..30.0),
                rng.gen_range(-30.0..30.0),
            ),
        );
        let u = SwitchingState::from_index(rng.gen_range(0..SwitchingState::COUNT)).unwrap();
        let exact = hold_input(&s, &u, 20e-6, &params).unwrap();
        let oracle = rk4(&s, &u, 20e-6, &params, 10e-9);
        for k in 0..3 {
            worst_i = worst_i.max((exact.i[k] - oracle.i[k]).abs() / oracle.i[k].abs().max(1.0));
        }
        let (a, b) = (exact.vd.as_array(), oracle.vd.as_array());
        for k in 0..3 {
            worst_vd = worst_vd.max((a[k] - b[k]).abs());
        }

        let split = rng.gen_range(1e-6..19e-6);
        let first = hold_input(&s, &u, split, &params).unwrap();
        let both = hold_input(&first, &u, 20e-6 - split, &params).unwrap();
        let (p, q) = (exact.vd.as_array(), both.vd.as_array());
        for k in 0..3 {
            worst_semi = worst_semi.max((exact.i[k] - both.i[k]).abs() / exact.i[k].abs().max(1.0));
            worst_semi = worst_semi.max((p[k] - q[k]).abs() / p[k].abs().max(1.0));
        }
    }
    (
        worst_i <= 1e-8 && worst_vd <= 1e-8 && worst_semi <= 1e-12,
        format!(
            "100 cases: current rel. error {worst_i:.2e}, vd error {worst_vd:.2e} V, semigroup rel. error {worst_semi:.2e}"
        ),
    )
}

fn criterion_7() -> Verdict {
    let params = PlantParams::default();
    let full = full_period_model(&params, 20e-6).unwrap();
    let grid = SubintervalGrid::new(vec![0.45, 0.75, 1.0], 20e-6).unwrap();
    let sub = subinterval_models(&params, &grid).unwrap();
    let a = [0.946, 0.964, 0.970];
    let b = [0.3375, 0.225, 0.1875];
    let err = (0..3)
        .map(|p| (sub[p].a - a[p]).abs().max((sub[p].b - b[p]).abs()))
        .fold(0.0f64, f64::max);
    (
        full.a == 0.88 && full.b == 0.75 && err <= 1e-12,
        format!("A = {}, B = {}, subinterval error {err:.2e}", full.a, full.b),
    )
}

fn level_log(seq: [&[i8]; 3], rate: f64) -> RunLog {
    let mut log = RunLog::new(rate, 0.0).unwrap();
    for n in 0..seq[0].len() {
        let u = SwitchingState([
            PhaseLevel::new(seq[0][n] as i32).unwrap(),
            PhaseLevel::new(seq[1][n] as i32).unwrap(),
            PhaseLevel::new(seq[2][n] as i32).unwrap(),
        ]);
        log.push(n as f64 / rate, &[0.0; 3], &u, &CapacitorDifferences::ZERO, &[0.0; 3]);
    }
    log
}

fn criterion_8() -> Verdict {
    let rate = 1e6;
    let n = 40_000;
    let mut worst = 0.0f64;
    for (h, ratio) in [(3usize, 0.10), (5, 0.037), (7, 0.25), (401, 0.02)] {
        let x: Vec<f64> = (0..n)
            .map(|k| {
                let t = k as f64 / rate;
                12.0 * (2.0 * PI * 50.0 * t).sin() + 12.0 * ratio * (2.0 * PI * 50.0 * h as f64 * t + 0.3).sin()
            })
            .collect();
        let s = harmonic_spectrum_of(&x, rate, 50.0, 1000).unwrap();
        worst = worst.max((s.thd - ratio).abs()).max((s.magnitudes[h] - ratio).abs());
    }

    // window of 4 samples; transitions charged to the sample they land on
    let a: &[i8] = &[0, 1, 2, 2, 1, -1, -2, -2, 0, 0, 0, 2];
    let b: &[i8] = &[0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0];
    let c: &[i8] = &[-2, -2, 2, 2, 2, 1, 1, 0, 0, -2, 0, 0];
    let counts = commutation_count(&level_log([a, b, c], 1.0), 4.0).unwrap().per_window;
    let expected = vec![2 + 4, 4 + 2, 4 + 4];
    (
        worst <= 1e-9 && counts == expected,
        format!("two-tone THD error {worst:.2e}; commutation counts {counts:?} (expected {expected:?})"),
    )
}

fn criterion_9() -> Verdict {
    let run = |mut s: Scenario| {
        s.duration = 0.2;
        s.initial = PlantState::new(0.0, [0.0; 3], CapacitorDifferences::new(20.0, -10.0, 10.0));
        let out = run_closed_loop(&s).expect("balancing run");
        let opts = MetricOptions::for_scenario(&s);
        log_metrics(&out.log, &opts).unwrap().balance
    };
    let s = run(Scenario::reference_standard());
    let m = run(Scenario::reference_multirate());
    let norm = |v: [f64; 3]| (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    let (ns, nm) = (norm(s.terminal_abs), norm(m.terminal_abs));
    let ratio = ns.max(nm) / ns.min(nm);
    let pass = s.time_to_band.is_some() && m.time_to_band.is_some() && ratio <= 2.0;
    let fmt = |b: &dcc_mpc::metrics::BalanceStats| {
        format!(
            "terminal |vd| = ({:.2}, {:.2}, {:.2}) V, in band from {}",
            b.terminal_abs[0],
            b.terminal_abs[1],
            b.terminal_abs[2],
            b.time_to_band.map_or("never".to_string(), |t| format!("{t:.4} s"))
        )
    };
    (
        pass,
        format!("standard {}; multirate {}; terminal ratio {ratio:.2}", fmt(&s), fmt(&m)),
    )
}

fn criterion_10() -> Verdict {
    let params = PlantParams::default();
    let cfg = Scenario::default().cost;
    let mut rng = StdRng::seed_from_u64(10);
    let x = random_inputs(&mut rng);
    let mut counts_ok = standard_mpc_step(&x, &full_period_model(&params, 20e-6).unwrap(), &cfg)
        .unwrap()
        .candidates_evaluated
        == 125;
    for n in 1..=3 {
        let ctl = MultirateController::new(&params, &SubintervalGrid::uniform(n, 20e-6).unwrap(), cfg).unwrap();
        counts_ok &= ctl.step(&x).candidates_evaluated == 125 * n as u64;
        counts_ok &= ctl.exhaustive_step(&x).unwrap().candidates_evaluated == 125u64.pow(n as u32);
    }
    let report = bench_enumeration(&Scenario::reference_multirate(), 2000, 0).unwrap();
    let medians: Vec<f64> = report.scaling.iter().map(|(_, t)| *t).collect();
    let monotone = medians.windows(2).all(|w| w[1] > w[0]);
    let slope = report.scaling_exponent;
    (
        counts_ok && monotone && (0.5..=1.5).contains(&slope),
        format!(
            "candidate counts {}; medians {:?} ns; log-log slope {slope:.3}",
            if counts_ok { "exact" } else { "wrong" },
            medians.iter().map(|t| t.round() as u64).collect::<Vec<_>>()
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [(u32, fn() -> Verdict); 10] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (7, criterion_7),
        (8, criterion_8),
        (9, criterion_9),
        (10, criterion_10),
    ];
    let filter: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (n, check) in criteria {
        if !filter.is_empty() && !filter.contains(&n) {
            continue;
        }
        let (pass, detail) = match catch_unwind(AssertUnwindSafe(check)) {
            Ok(v) => v,
            Err(e) => {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                (false, format!("panicked: {msg}"))
            }
        };
        println!("criterion {n:>2}: {} - {detail}", if pass { "PASS" } else { "FAIL" });
        failed += usize::from(!pass);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
