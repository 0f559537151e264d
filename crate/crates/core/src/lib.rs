//! Simulation and control of a three-phase five-level diode-clamped inverter
//! under finite-control-set model predictive control.
//!
//! * [`converter`]: levels, switching states, phase voltages and the
//!   capacitor coupling map.
//! * [`plant`]: exact continuous-time plant between switching instants.
//! * [`predictor`]: the discrete models used inside the controller.
//! * [`controller`]: standard, multirate and exhaustive MPC steps.
//! * [`metrics`]: THD, commutation counts, tracking error and balancing.
//! * [`harness`], [`scenario`], [`bench`]: closed-loop runs, scenario files
//!   and step timing.

pub mod bench;
pub mod controller;
pub mod converter;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod plant;
pub mod predictor;
pub mod runlog;
pub mod scenario;

pub use controller::{
    exhaustive_multirate_step, multirate_mpc_step, stage_cost, standard_mpc_step, ControlDecision,
    ControllerInputs, CostConfig, CostWeights, MultirateController, TrackingNorm,
};
pub use converter::{
    balancing_column, coupling_matrix, phase_voltage, CapacitorDifferences, CapacitorVoltages,
    CouplingTable, PhaseLevel, SwitchingState,
};
pub use error::{Error, Result};
pub use harness::{compare, run_closed_loop, ComparisonReport, RunOutcome, RunReport};
pub use plant::{hold_input, run_schedule, Neutral, PlantParams, PlantState};
pub use predictor::{
    full_period_model, predict_current, predict_vd, subinterval_models, PredictionModel,
    SubintervalGrid,
};
pub use runlog::RunLog;
pub use scenario::{Algorithm, Scenario};
