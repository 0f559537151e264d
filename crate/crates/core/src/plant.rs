//! Continuous-time plant: three RL phases fed by the converter, plus the
//! capacitor-difference dynamics.
//!
//! Within one hold interval the switching state is constant and the plant is
//! a linear time-invariant system, so each hold is propagated exactly rather
//! than by numerical integration.

use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};

use crate::converter::{
    balancing_column, phase_voltage, phase_voltage_weights, CapacitorDifferences,
    CapacitorVoltages, SwitchingState, Vec3,
};
use crate::error::{positive, Error, Result};
use crate::runlog::RunLog;

/// How the load star point is connected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Neutral {
    /// Load neutral tied to the DC-link midpoint; phases are independent.
    #[default]
    Tied,
    /// Isolated star point; the common-mode voltage is removed.
    Floating,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantParams {
    /// Load resistance per phase, ohms.
    pub r: f64,
    /// Filter inductance per phase, henries.
    pub l: f64,
    /// Capacitance of each DC-link capacitor, farads.
    pub c: f64,
    /// DC-link voltage, volts.
    pub v_dc: f64,
    /// Phase voltages use the actual capacitor voltages instead of `V_dc / 4` steps.
    pub capacitor_coupling: bool,
    pub neutral: Neutral,
}

impl Default for PlantParams {
    fn default() -> Self {
        PlantParams {
            r: 30.0,
            l: 5e-3,
            c: 1e-3,
            v_dc: 750.0,
            capacitor_coupling: true,
            neutral: Neutral::Tied,
        }
    }
}

impl PlantParams {
    pub fn validate(&self) -> Result<()> {
        positive("R", self.r)?;
        positive("L", self.l)?;
        positive("C", self.c)?;
        positive("V_dc", self.v_dc)?;
        Ok(())
    }

    /// Capacitor voltages the phase legs see for the given differences.
    pub fn capacitor_voltages(&self, vd: &CapacitorDifferences) -> CapacitorVoltages {
        if self.capacitor_coupling {
            CapacitorVoltages::from_differences(self.v_dc, vd)
        } else {
            CapacitorVoltages::balanced(self.v_dc)
        }
    }

    /// Voltages applied across the three RL branches.
    pub fn branch_voltages(&self, u: &SwitchingState, vd: &CapacitorDifferences) -> Vec3 {
        let caps = self.capacitor_voltages(vd);
        let mut v = [
            phase_voltage(u.0[0], &caps),
            phase_voltage(u.0[1], &caps),
            phase_voltage(u.0[2], &caps),
        ];
        if self.neutral == Neutral::Floating {
            let common = (v[0] + v[1] + v[2]) / 3.0;
            v.iter_mut().for_each(|x| *x -= common);
        }
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantState {
    /// Simulation time, seconds.
    pub t: f64,
    /// Phase currents, amperes; positive from converter to load.
    pub i: Vec3,
    pub vd: CapacitorDifferences,
}

impl PlantState {
    pub fn new(t: f64, i: Vec3, vd: CapacitorDifferences) -> Self {
        PlantState { t, i, vd }
    }

    pub fn zero() -> Self {
        PlantState::new(0.0, [0.0; 3], CapacitorDifferences::ZERO)
    }

    pub fn is_finite(&self) -> bool {
        self.t.is_finite()
            && self.i.iter().all(|x| x.is_finite())
            && self.vd.as_array().iter().all(|x| x.is_finite())
    }
}

/// `(1 - e^-x) / x`, continuous at 0.
fn phi1(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        -(-x).exp_m1() / x
    }
}

/// `(x - 1 + e^-x) / x^2`, continuous at 0.
fn phi2(x: f64) -> f64 {
    if x.abs() < 0.1 {
        // sum_n (-x)^n / (n + 2)!
        let mut term = 0.5;
        let mut sum = 0.0;
        for n in 0..12 {
            sum += term;
            term *= -x / (n as f64 + 3.0);
        }
        sum
    } else {
        (x + (-x).exp_m1()) / (x * x)
    }
}

/// Holds `u` for `dt` seconds starting from `state`.
///
/// With capacitor coupling off the phase voltages are fixed steps of
/// `V_dc / 4`, the currents decouple from `v_d`, and the flow is evaluated in
/// closed form. With coupling on the phase voltages follow the capacitor
/// voltages, which move during the hold; the six-state affine system is then
/// propagated with its matrix exponential.
pub fn hold_input(
    state: &PlantState,
    u: &SwitchingState,
    dt: f64,
    params: &PlantParams,
) -> Result<PlantState> {
    positive("dt", dt)?;
    let next = if params.capacitor_coupling {
        coupled_flow(state, u, dt, params)
    } else {
        decoupled_flow(state, u, dt, params)
    };
    if !next.is_finite() {
        return Err(Error::NonFinite { t: next.t });
    }
    Ok(next)
}

fn decoupled_flow(state: &PlantState, u: &SwitchingState, dt: f64, params: &PlantParams) -> PlantState {
    let v = params.branch_voltages(u, &state.vd);
    let x = params.r * dt / params.l;
    let decay = (-x).exp();
    let gain = dt / params.l * phi1(x);
    let ramp = dt * dt / params.l * phi2(x);

    let mut i = [0.0; 3];
    let mut charge = [0.0; 3];
    for k in 0..3 {
        i[k] = decay * state.i[k] + gain * v[k];
        // integral of the phase current over the hold
        charge[k] = gain * params.l * state.i[k] + ramp * v[k];
    }

    let mut dvd = [0.0; 3];
    for (k, level) in u.0.iter().enumerate() {
        let col = balancing_column(*level);
        for row in 0..3 {
            dvd[row] += col[row] as f64 * charge[k];
        }
    }
    let vd = CapacitorDifferences::new(
        state.vd.vd1 + dvd[0] / params.c,
        state.vd.vd2 + dvd[1] / params.c,
        state.vd.vd3 + dvd[2] / params.c,
    );
    PlantState::new(state.t + dt, i, vd)
}

/// Capacitor voltages `vc1..vc4` as affine functions of `(1, vd1, vd2, vd3)`.
fn capacitor_affine(v_dc: f64) -> [[f64; 4]; 4] {
    let q = v_dc / 4.0;
    [
        [q, 0.75, -0.25, -0.5],
        [q, -0.25, 0.75, 0.5],
        [q, -0.25, -0.25, 0.5],
        [q, -0.25, -0.25, -0.5],
    ]
}

/// Generator of the augmented state `(i_a, i_b, i_c, vd1, vd2, vd3, 1)`.
fn coupled_generator(u: &SwitchingState, params: &PlantParams) -> SMatrix<f64, 7, 7> {
    let caps = capacitor_affine(params.v_dc);
    // branch voltage coefficients on (1, vd1, vd2, vd3)
    let mut volt = [[0.0; 4]; 3];
    for (k, level) in u.0.iter().enumerate() {
        let w = phase_voltage_weights(*level);
        for (j, wj) in w.iter().enumerate() {
            for c in 0..4 {
                volt[k][c] += *wj as f64 * caps[j][c];
            }
        }
    }
    if params.neutral == Neutral::Floating {
        for c in 0..4 {
            let common = (volt[0][c] + volt[1][c] + volt[2][c]) / 3.0;
            for row in volt.iter_mut() {
                row[c] -= common;
            }
        }
    }
    let mut g = SMatrix::<f64, 7, 7>::zeros();
    for k in 0..3 {
        g[(k, k)] = -params.r / params.l;
        for j in 0..3 {
            g[(k, 3 + j)] = volt[k][1 + j] / params.l;
        }
        g[(k, 6)] = volt[k][0] / params.l;
    }
    for (k, level) in u.0.iter().enumerate() {
        let col = balancing_column(*level);
        for row in 0..3 {
            g[(3 + row, k)] = col[row] as f64 / params.c;
        }
    }
    g
}

fn coupled_flow(state: &PlantState, u: &SwitchingState, dt: f64, params: &PlantParams) -> PlantState {
    let flow = (coupled_generator(u, params) * dt).exp();
    let y0 = SVector::<f64, 7>::from([
        state.i[0],
        state.i[1],
        state.i[2],
        state.vd.vd1,
        state.vd.vd2,
        state.vd.vd3,
        1.0,
    ]);
    let y = flow * y0;
    PlantState::new(
        state.t + dt,
        [y[0], y[1], y[2]],
        CapacitorDifferences::new(y[3], y[4], y[5]),
    )
}

/// Applies a sequence of holds and logs the trajectory at `log_rate`.
///
/// Log samples fall on `state.t + n / log_rate`; levels are those in force at
/// the sample instant and the state is evaluated exactly there. The log
/// reference columns are zero.
pub fn run_schedule(
    state: &PlantState,
    schedule: &[(SwitchingState, f64)],
    params: &PlantParams,
    log_rate: f64,
) -> Result<(PlantState, RunLog)> {
    let mut log = RunLog::new(log_rate, state.t)?;
    let end = run_schedule_logged(state, schedule, params, &mut log, &|_| [0.0; 3])?;
    Ok((end, log))
}

/// Like [`run_schedule`] but appends to an existing log and samples the
/// reference from `reference(t)`.
pub fn run_schedule_logged(
    state: &PlantState,
    schedule: &[(SwitchingState, f64)],
    params: &PlantParams,
    log: &mut RunLog,
    reference: &dyn Fn(f64) -> Vec3,
) -> Result<PlantState> {
    let spacing = 1.0 / log.sample_rate;
    let tol = 1e-6 * spacing;
    let mut current = *state;
    for (u, dt) in schedule {
        positive("dt", *dt)?;
        let end = current.t + dt;
        loop {
            let t = log.time_of(log.len());
            if t >= end - tol {
                break;
            }
            let offset = t - current.t;
            let sample = if offset <= tol {
                current
            } else {
                hold_input(&current, u, offset, params)?
            };
            log.push(t, &sample.i, u, &sample.vd, &reference(t));
        }
        current = hold_input(&current, u, *dt, params)?;
    }
    Ok(current)
}
