//! Python bindings: plant, prediction models, the three controllers, closed
//! loop runs and metrics.

use std::path::PathBuf;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use dcc_mpc::controller::EXHAUSTIVE_MAX_SUBINTERVALS;
use dcc_mpc::metrics;
use dcc_mpc::{
    CapacitorDifferences, ControlDecision, ControllerInputs, CostConfig, CostWeights, CouplingTable,
    Error, Neutral, PredictionModel, SubintervalGrid, SwitchingState, TrackingNorm,
};

type Vec3 = [f64; 3];
type Levels = (i32, i32, i32);

fn py_err(e: Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn state_of(levels: Levels) -> PyResult<SwitchingState> {
    SwitchingState::new(levels.0, levels.1, levels.2).map_err(py_err)
}

fn levels_of(u: &SwitchingState) -> Levels {
    let l = u.levels();
    (l[0], l[1], l[2])
}

fn neutral_of(name: &str) -> PyResult<Neutral> {
    match name {
        "tied" => Ok(Neutral::Tied),
        "floating" => Ok(Neutral::Floating),
        other => Err(PyValueError::new_err(format!("neutral must be 'tied' or 'floating', got {other:?}"))),
    }
}

/// Electrical parameters of the inverter and its RL load.
#[pyclass(name = "PlantParams", from_py_object)]
#[derive(Clone)]
struct PyPlantParams {
    inner: dcc_mpc::PlantParams,
}

#[pymethods]
impl PyPlantParams {
    #[new]
    #[pyo3(signature = (r=30.0, l=5e-3, c=1e-3, v_dc=750.0, capacitor_coupling=true, neutral="tied"))]
    fn new(r: f64, l: f64, c: f64, v_dc: f64, capacitor_coupling: bool, neutral: &str) -> PyResult<Self> {
        let inner = dcc_mpc::PlantParams {
            r,
            l,
            c,
            v_dc,
            capacitor_coupling,
            neutral: neutral_of(neutral)?,
        };
        inner.validate().map_err(py_err)?;
        Ok(PyPlantParams { inner })
    }

    #[getter]
    fn r(&self) -> f64 {
        self.inner.r
    }

    #[getter]
    fn l(&self) -> f64 {
        self.inner.l
    }

    #[getter]
    fn c(&self) -> f64 {
        self.inner.c
    }

    #[getter]
    fn v_dc(&self) -> f64 {
        self.inner.v_dc
    }

    fn __repr__(&self) -> String {
        let p = &self.inner;
        format!(
            "PlantParams(r={}, l={}, c={}, v_dc={}, capacitor_coupling={}, neutral={:?})",
            p.r,
            p.l,
            p.c,
            p.v_dc,
            if p.capacitor_coupling { "True" } else { "False" },
            match p.neutral {
                Neutral::Tied => "tied",
                Neutral::Floating => "floating",
            }
        )
    }
}

/// Outcome of one controller step.
#[pyclass(name = "Decision", frozen, skip_from_py_object)]
struct PyDecision {
    /// Switching states, one per subinterval.
    #[pyo3(get)]
    states: Vec<Levels>,
    /// Start of each state within the period, seconds.
    #[pyo3(get)]
    offsets: Vec<f64>,
    #[pyo3(get)]
    costs: Vec<f64>,
    #[pyo3(get)]
    total_cost: f64,
    #[pyo3(get)]
    candidates_evaluated: u64,
}

impl From<ControlDecision> for PyDecision {
    fn from(d: ControlDecision) -> Self {
        PyDecision {
            states: d.actions.iter().map(|(u, _)| levels_of(u)).collect(),
            offsets: d.actions.iter().map(|(_, t)| *t).collect(),
            total_cost: d.total_cost(),
            costs: d.costs,
            candidates_evaluated: d.candidates_evaluated,
        }
    }
}

#[pymethods]
impl PyDecision {
    fn __repr__(&self) -> String {
        format!(
            "Decision(states={:?}, total_cost={}, candidates_evaluated={})",
            self.states, self.total_cost, self.candidates_evaluated
        )
    }
}

/// Finite-control-set MPC over a subinterval grid. A single-subinterval
/// grid is standard MPC.
#[pyclass(name = "Controller", frozen, skip_from_py_object)]
struct PyController {
    inner: dcc_mpc::MultirateController,
}

#[allow(clippy::too_many_arguments)]
fn cost_config(
    lambda_i: f64,
    lambda_c: f64,
    lambda_s: f64,
    capacitance: f64,
    tracking_norm: &str,
    coupling_table: &str,
) -> PyResult<CostConfig> {
    let weights = CostWeights {
        lambda_i,
        lambda_c,
        lambda_s,
    };
    weights.validate().map_err(py_err)?;
    let mut cfg = CostConfig::new(weights, capacitance);
    cfg.tracking_norm = match tracking_norm {
        "l1" => TrackingNorm::L1,
        "l2sq" => TrackingNorm::L2sq,
        other => return Err(PyValueError::new_err(format!("unknown tracking norm {other:?}"))),
    };
    cfg.coupling_table = match coupling_table {
        "equations" => CouplingTable::Equations,
        "printed_table" => CouplingTable::PrintedTable,
        other => return Err(PyValueError::new_err(format!("unknown coupling table {other:?}"))),
    };
    Ok(cfg)
}

fn inputs(i_m: Vec3, v_dm: Vec3, u_m: Levels, i_ref: Vec3) -> PyResult<ControllerInputs> {
    Ok(ControllerInputs {
        i_m,
        v_dm: CapacitorDifferences::from_array(v_dm),
        u_m: state_of(u_m)?,
        i_ref,
    })
}

#[pymethods]
impl PyController {
    #[new]
    #[pyo3(signature = (
        params,
        alphas=vec![1.0],
        ts=20e-6,
        lambda_i=100.0,
        lambda_c=2e-4,
        lambda_s=1.0,
        capacitance=None,
        tracking_norm="l1",
        coupling_table="equations",
    ))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        params: &PyPlantParams,
        alphas: Vec<f64>,
        ts: f64,
        lambda_i: f64,
        lambda_c: f64,
        lambda_s: f64,
        capacitance: Option<f64>,
        tracking_norm: &str,
        coupling_table: &str,
    ) -> PyResult<Self> {
        let cfg = cost_config(
            lambda_i,
            lambda_c,
            lambda_s,
            capacitance.unwrap_or(params.inner.c),
            tracking_norm,
            coupling_table,
        )?;
        let grid = SubintervalGrid::new(alphas, ts).map_err(py_err)?;
        let inner = dcc_mpc::MultirateController::new(&params.inner, &grid, cfg).map_err(py_err)?;
        Ok(PyController { inner })
    }

    #[getter]
    fn subintervals(&self) -> usize {
        self.inner.subintervals()
    }

    /// Greedy decision, one subinterval at a time.
    #[pyo3(signature = (i_m, v_dm, u_m, i_ref))]
    fn step(&self, i_m: Vec3, v_dm: Vec3, u_m: Levels, i_ref: Vec3) -> PyResult<PyDecision> {
        Ok(self.inner.step(&inputs(i_m, v_dm, u_m, i_ref)?).into())
    }

    /// Exact minimum over every sequence of states.
    #[pyo3(signature = (i_m, v_dm, u_m, i_ref))]
    fn exhaustive_step(&self, py: Python<'_>, i_m: Vec3, v_dm: Vec3, u_m: Levels, i_ref: Vec3) -> PyResult<PyDecision> {
        if self.inner.subintervals() > EXHAUSTIVE_MAX_SUBINTERVALS {
            return Err(py_err(Error::TooManySubintervals(self.inner.subintervals())));
        }
        let x = inputs(i_m, v_dm, u_m, i_ref)?;
        py.detach(|| self.inner.exhaustive_step(&x))
            .map(Into::into)
            .map_err(py_err)
    }
}

/// `(A, B)` of the controller model over an interval of `dt` seconds.
#[pyfunction]
#[pyo3(signature = (dt, r=30.0, l=5e-3, v_dc=750.0))]
fn prediction_model(dt: f64, r: f64, l: f64, v_dc: f64) -> PyResult<(f64, f64)> {
    let m = PredictionModel::over(r, l, v_dc, dt).map_err(py_err)?;
    Ok((m.a, m.b))
}

/// `(A_p, B_p)` for each subinterval of the grid.
#[pyfunction]
#[pyo3(signature = (alphas, params, ts=20e-6))]
fn subinterval_models(alphas: Vec<f64>, params: &PyPlantParams, ts: f64) -> PyResult<Vec<(f64, f64)>> {
    let grid = SubintervalGrid::new(alphas, ts).map_err(py_err)?;
    let models = dcc_mpc::subinterval_models(&params.inner, &grid).map_err(py_err)?;
    Ok(models.iter().map(|m| (m.a, m.b)).collect())
}

/// Exact plant response to holding `u` for `dt` seconds; returns `(i, vd)`.
#[pyfunction]
fn hold_input(i: Vec3, vd: Vec3, u: Levels, dt: f64, params: &PyPlantParams) -> PyResult<(Vec3, Vec3)> {
    let s = dcc_mpc::PlantState::new(0.0, i, CapacitorDifferences::from_array(vd));
    let next = dcc_mpc::hold_input(&s, &state_of(u)?, dt, &params.inner).map_err(py_err)?;
    Ok((next.i, next.vd.as_array()))
}

/// A closed-loop scenario.
#[pyclass(name = "Scenario", from_py_object)]
#[derive(Clone)]
struct PyScenario {
    inner: dcc_mpc::Scenario,
}

#[pymethods]
impl PyScenario {
    /// Built-in reference operating point: `"standard"` or `"multirate"`.
    #[staticmethod]
    #[pyo3(signature = (algorithm="standard"))]
    fn reference(algorithm: &str) -> PyResult<Self> {
        let inner = match algorithm {
            "standard" => dcc_mpc::Scenario::reference_standard(),
            "multirate" => dcc_mpc::Scenario::reference_multirate(),
            other => return Err(PyValueError::new_err(format!("unknown reference scenario {other:?}"))),
        };
        Ok(PyScenario { inner })
    }

    #[staticmethod]
    fn from_file(path: PathBuf) -> PyResult<Self> {
        Ok(PyScenario {
            inner: dcc_mpc::Scenario::from_path(path).map_err(py_err)?,
        })
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        Ok(PyScenario {
            inner: dcc_mpc::Scenario::from_toml_str(text).map_err(py_err)?,
        })
    }

    fn to_toml(&self) -> String {
        self.inner.to_toml_string()
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name.clone()
    }

    #[getter]
    fn algorithm(&self) -> &'static str {
        self.inner.algorithm.as_str()
    }

    #[getter]
    fn duration(&self) -> f64 {
        self.inner.duration
    }

    #[setter]
    fn set_duration(&mut self, seconds: f64) {
        self.inner.duration = seconds;
    }

    #[getter]
    fn initial_vd(&self) -> Vec3 {
        self.inner.initial.vd.as_array()
    }

    #[setter]
    fn set_initial_vd(&mut self, vd: Vec3) {
        self.inner.initial.vd = CapacitorDifferences::from_array(vd);
    }

    /// Runs the closed loop and returns `(report, log)`; both are dicts.
    fn run<'py>(&self, py: Python<'py>) -> PyResult<(Bound<'py, PyDict>, Bound<'py, PyDict>)> {
        let out = py.detach(|| dcc_mpc::run_closed_loop(&self.inner)).map_err(py_err)?;
        let r = &out.report;
        let m = &r.metrics;
        let report = PyDict::new(py);
        report.set_item("name", &r.name)?;
        report.set_item("algorithm", r.algorithm.as_str())?;
        report.set_item("subintervals", r.subintervals)?;
        report.set_item("thd", m.thd.map(|t| t.to_vec()))?;
        report.set_item("thd_mean", m.thd_mean)?;
        report.set_item("commutations_per_period", m.commutations_per_period)?;
        report.set_item("tracking_rms", m.tracking_rms)?;
        report.set_item("vd_max_abs", m.balance.max_abs.to_vec())?;
        report.set_item("vd_terminal_abs", m.balance.terminal_abs.to_vec())?;
        report.set_item("time_to_band", m.balance.time_to_band)?;
        report.set_item("candidates_per_step", r.candidates_per_step)?;
        report.set_item("step_median_ns", r.step_time.median_ns)?;

        let log = &out.log;
        let columns = PyDict::new(py);
        columns.set_item("sample_rate", log.sample_rate)?;
        columns.set_item("t", (0..log.len()).map(|n| log.time_of(n)).collect::<Vec<_>>())?;
        for (k, p) in ["a", "b", "c"].iter().enumerate() {
            columns.set_item(format!("i{p}"), &log.currents[k])?;
            columns.set_item(format!("u{p}"), &log.levels[k])?;
            columns.set_item(format!("i{p}_ref"), &log.reference[k])?;
            columns.set_item(format!("vd{}", k + 1), &log.vd[k])?;
        }
        Ok((report, columns))
    }

    fn __repr__(&self) -> String {
        format!(
            "Scenario(name={:?}, algorithm={:?}, duration={})",
            self.inner.name,
            self.inner.algorithm.as_str(),
            self.inner.duration
        )
    }
}

/// THD of a sampled signal spanning whole fundamental periods.
#[pyfunction]
#[pyo3(signature = (samples, sample_rate, fundamental_hz=50.0, max_order=1000))]
fn thd(samples: Vec<f64>, sample_rate: f64, fundamental_hz: f64, max_order: usize) -> PyResult<f64> {
    metrics::harmonic_spectrum_of(&samples, sample_rate, fundamental_hz, max_order)
        .map(|s| s.thd)
        .map_err(py_err)
}

/// Level distance switched per window for three level sequences.
#[pyfunction]
fn commutations(levels: [Vec<i32>; 3], sample_rate: f64, window: f64) -> PyResult<Vec<u64>> {
    let n = levels[0].len();
    if levels.iter().any(|l| l.len() != n) {
        return Err(PyValueError::new_err("level sequences differ in length"));
    }
    let mut log = dcc_mpc::RunLog::new(sample_rate, 0.0).map_err(py_err)?;
    for k in 0..n {
        let u = state_of((levels[0][k], levels[1][k], levels[2][k]))?;
        log.push(log.time_of(k), &[0.0; 3], &u, &CapacitorDifferences::ZERO, &[0.0; 3]);
    }
    metrics::commutation_count(&log, window)
        .map(|c| c.per_window)
        .map_err(py_err)
}

#[pymodule]
#[pyo3(name = "dcc_mpc")]
fn dcc_mpc_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPlantParams>()?;
    m.add_class::<PyController>()?;
    m.add_class::<PyDecision>()?;
    m.add_class::<PyScenario>()?;
    m.add_function(wrap_pyfunction!(prediction_model, m)?)?;
    m.add_function(wrap_pyfunction!(subinterval_models, m)?)?;
    m.add_function(wrap_pyfunction!(hold_input, m)?)?;
    m.add_function(wrap_pyfunction!(thd, m)?)?;
    m.add_function(wrap_pyfunction!(commutations, m)?)?;
    Ok(())
}
