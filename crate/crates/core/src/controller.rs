//! Finite-control-set decision engines.
//!
//! All three engines score candidates with the same stage cost
//!
//! ```text
//! lambda_I * |i_pred - i_ref| + lambda_S * |u - u_prev| + lambda_C * (vd_pred - vd_m) . vd_m
//! ```
//!
//! and scan the 125 switching states in lexicographic order, keeping the
//! first minimum.
//!
//! * [`standard_mpc_step`] holds one state for the whole sampling period.
//! * [`multirate_mpc_step`] splits the period into subintervals and picks one
//!   state per subinterval greedily, chaining predictions from one
//!   subinterval into the next (`125 * N` evaluations).
//! * [`exhaustive_multirate_step`] minimises the summed cost over every
//!   sequence (`125^N` evaluations) and exists to measure the greedy gap.

use serde::{Deserialize, Serialize};

use crate::converter::{
    coupling_matrix_with, mat_vec, CapacitorDifferences, CouplingTable, Mat3, SwitchingState, Vec3,
};
use crate::error::{positive, Error, Result};
use crate::plant::PlantParams;
use crate::predictor::{predict_current, subinterval_models, PredictionModel, SubintervalGrid};

/// Largest subinterval count the exhaustive search accepts.
pub const EXHAUSTIVE_MAX_SUBINTERVALS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackingNorm {
    /// Sum of absolute phase errors.
    #[default]
    L1,
    /// Sum of squared phase errors.
    L2sq,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostWeights {
    /// Weight on the tracking error, per ampere.
    pub lambda_i: f64,
    /// Weight on the balancing term, per volt squared.
    pub lambda_c: f64,
    /// Weight on level transitions. The reference cost uses 1.
    pub lambda_s: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        CostWeights {
            lambda_i: 1e2,
            lambda_c: 2e-4,
            lambda_s: 1.0,
        }
    }
}

impl CostWeights {
    pub fn new(lambda_i: f64, lambda_c: f64) -> Self {
        CostWeights {
            lambda_i,
            lambda_c,
            lambda_s: 1.0,
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        CostWeights {
            lambda_i: self.lambda_i * factor,
            lambda_c: self.lambda_c * factor,
            lambda_s: self.lambda_s * factor,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda_I", self.lambda_i),
            ("lambda_C", self.lambda_c),
            ("lambda_S", self.lambda_s),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter {
                    name,
                    requirement: "finite and >= 0",
                    value: v,
                });
            }
        }
        Ok(())
    }
}

/// Everything the cost function needs besides measurements.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostConfig {
    pub weights: CostWeights,
    pub tracking_norm: TrackingNorm,
    pub coupling_table: CouplingTable,
    /// Capacitance assumed by the balancing prediction, farads.
    pub capacitance: f64,
}

impl CostConfig {
    pub fn new(weights: CostWeights, capacitance: f64) -> Self {
        CostConfig {
            weights,
            tracking_norm: TrackingNorm::L1,
            coupling_table: CouplingTable::Equations,
            capacitance,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerInputs {
    /// Measured currents, A.
    pub i_m: Vec3,
    /// Measured capacitor differences, V.
    pub v_dm: CapacitorDifferences,
    /// State applied at the end of the previous period.
    pub u_m: SwitchingState,
    /// Current reference, A.
    pub i_ref: Vec3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlDecision {
    /// Switching states and their start offsets within the period, seconds.
    pub actions: Vec<(SwitchingState, f64)>,
    /// Stage cost achieved in each subinterval.
    pub costs: Vec<f64>,
    pub candidates_evaluated: u64,
}

impl ControlDecision {
    /// Sum of the stage costs, accumulated left to right.
    pub fn total_cost(&self) -> f64 {
        self.costs.iter().fold(0.0, |acc, c| acc + c)
    }

    pub fn states(&self) -> Vec<SwitchingState> {
        self.actions.iter().map(|(u, _)| *u).collect()
    }
}

/// Stage cost with the 1-norm tracking term.
pub fn stage_cost(
    i_pred: &Vec3,
    i_ref: &Vec3,
    u: &SwitchingState,
    u_prev: &SwitchingState,
    vd_pred: &CapacitorDifferences,
    v_dm: &CapacitorDifferences,
    w: &CostWeights,
) -> f64 {
    stage_cost_with(i_pred, i_ref, u, u_prev, vd_pred, v_dm, w, TrackingNorm::L1)
}

#[allow(clippy::too_many_arguments)]
#[inline]
pub fn stage_cost_with(
    i_pred: &Vec3,
    i_ref: &Vec3,
    u: &SwitchingState,
    u_prev: &SwitchingState,
    vd_pred: &CapacitorDifferences,
    v_dm: &CapacitorDifferences,
    w: &CostWeights,
    norm: TrackingNorm,
) -> f64 {
    let e = [i_pred[0] - i_ref[0], i_pred[1] - i_ref[1], i_pred[2] - i_ref[2]];
    let tracking = match norm {
        TrackingNorm::L1 => e[0].abs() + e[1].abs() + e[2].abs(),
        TrackingNorm::L2sq => e[0] * e[0] + e[1] * e[1] + e[2] * e[2],
    };
    let switching = u.distance(u_prev) as f64;
    let d = [vd_pred.vd1 - v_dm.vd1, vd_pred.vd2 - v_dm.vd2, vd_pred.vd3 - v_dm.vd3];
    let balance = d[0] * v_dm.vd1 + d[1] * v_dm.vd2 + d[2] * v_dm.vd3;
    w.lambda_i * tracking + w.lambda_s * switching + w.lambda_c * balance
}

/// One subinterval model with its coupling matrices precomputed for every
/// candidate.
#[derive(Debug, Clone)]
struct Stage {
    model: PredictionModel,
    coupling: Vec<Mat3>,
}

impl Stage {
    fn new(model: PredictionModel, cfg: &CostConfig) -> Result<Self> {
        let coupling = SwitchingState::all()
            .iter()
            .map(|u| coupling_matrix_with(u, model.dt, cfg.capacitance, cfg.coupling_table))
            .collect::<Result<Vec<_>>>()?;
        Ok(Stage { model, coupling })
    }

    /// Predicted current, predicted differences and stage cost for candidate `u`.
    #[inline]
    #[allow(clippy::too_many_arguments)]
    fn evaluate(
        &self,
        u: &SwitchingState,
        i: &Vec3,
        vd: &CapacitorDifferences,
        u_prev: &SwitchingState,
        i_ref: &Vec3,
        v_dm: &CapacitorDifferences,
        cfg: &CostConfig,
    ) -> (f64, Vec3, CapacitorDifferences) {
        let i_next = predict_current(&self.model, i, u);
        let d = mat_vec(&self.coupling[u.index()], &i_next);
        let vd_next = CapacitorDifferences::new(vd.vd1 + d[0], vd.vd2 + d[1], vd.vd3 + d[2]);
        let cost = stage_cost_with(
            &i_next,
            i_ref,
            u,
            u_prev,
            &vd_next,
            v_dm,
            &cfg.weights,
            cfg.tracking_norm,
        );
        (cost, i_next, vd_next)
    }

    /// First minimiser over the lexicographic scan.
    fn best(
        &self,
        i: &Vec3,
        vd: &CapacitorDifferences,
        u_prev: &SwitchingState,
        i_ref: &Vec3,
        v_dm: &CapacitorDifferences,
        cfg: &CostConfig,
    ) -> (SwitchingState, f64, Vec3, CapacitorDifferences) {
        let mut best: Option<(SwitchingState, f64, Vec3, CapacitorDifferences)> = None;
        for u in SwitchingState::all() {
            let (cost, i_next, vd_next) = self.evaluate(u, i, vd, u_prev, i_ref, v_dm, cfg);
            if best.as_ref().is_none_or(|b| cost < b.1) {
                best = Some((*u, cost, i_next, vd_next));
            }
        }
        best.expect("candidate set is non-empty")
    }
}

/// Precomputed controller for repeated use in a closed loop.
#[derive(Debug, Clone)]
pub struct MultirateController {
    stages: Vec<Stage>,
    offsets: Vec<f64>,
    cfg: CostConfig,
}

impl MultirateController {
    pub fn new(params: &PlantParams, grid: &SubintervalGrid, cfg: CostConfig) -> Result<Self> {
        let models = subinterval_models(params, grid)?;
        Self::from_models(models, grid.offsets(), cfg)
    }

    /// Single-stage controller over a full-period model.
    pub fn standard(model: PredictionModel, cfg: CostConfig) -> Result<Self> {
        Self::from_models(vec![model], vec![0.0], cfg)
    }

    fn from_models(models: Vec<PredictionModel>, offsets: Vec<f64>, cfg: CostConfig) -> Result<Self> {
        cfg.weights.validate()?;
        positive("C", cfg.capacitance)?;
        let stages = models
            .into_iter()
            .map(|m| Stage::new(m, &cfg))
            .collect::<Result<Vec<_>>>()?;
        Ok(MultirateController { stages, offsets, cfg })
    }

    pub fn subintervals(&self) -> usize {
        self.stages.len()
    }

    pub fn config(&self) -> &CostConfig {
        &self.cfg
    }

    /// Greedy per-subinterval optimisation using one reference for all subintervals.
    pub fn step(&self, inputs: &ControllerInputs) -> ControlDecision {
        let refs = vec![inputs.i_ref; self.stages.len()];
        self.step_with_references(inputs, &refs)
    }

    /// Greedy optimisation with a separate reference per subinterval.
    pub fn step_with_references(&self, inputs: &ControllerInputs, refs: &[Vec3]) -> ControlDecision {
        assert_eq!(refs.len(), self.stages.len(), "one reference per subinterval");
        let mut i = inputs.i_m;
        let mut vd = inputs.v_dm;
        let mut u_prev = inputs.u_m;
        let mut actions = Vec::with_capacity(self.stages.len());
        let mut costs = Vec::with_capacity(self.stages.len());
        for ((stage, offset), i_ref) in self.stages.iter().zip(&self.offsets).zip(refs) {
            let (u, cost, i_next, vd_next) = stage.best(&i, &vd, &u_prev, i_ref, &inputs.v_dm, &self.cfg);
            actions.push((u, *offset));
            costs.push(cost);
            i = i_next;
            vd = vd_next;
            u_prev = u;
        }
        ControlDecision {
            actions,
            costs,
            candidates_evaluated: (SwitchingState::COUNT * self.stages.len()) as u64,
        }
    }

    /// Minimum of the summed stage cost over all `125^N` sequences.
    pub fn exhaustive_step(&self, inputs: &ControllerInputs) -> Result<ControlDecision> {
        let n = self.stages.len();
        if n > EXHAUSTIVE_MAX_SUBINTERVALS {
            return Err(Error::TooManySubintervals(n));
        }
        let mut search = Exhaustive {
            ctl: self,
            inputs,
            prefix: Vec::with_capacity(n),
            prefix_costs: Vec::with_capacity(n),
            best: None,
        };
        search.descend(0, inputs.i_m, inputs.v_dm, inputs.u_m, 0.0);
        let (seq, costs, _) = search.best.expect("candidate set is non-empty");
        Ok(ControlDecision {
            actions: seq.into_iter().zip(self.offsets.iter().copied()).collect(),
            costs,
            candidates_evaluated: (SwitchingState::COUNT as u64).pow(n as u32),
        })
    }
}

struct Exhaustive<'a> {
    ctl: &'a MultirateController,
    inputs: &'a ControllerInputs,
    prefix: Vec<SwitchingState>,
    prefix_costs: Vec<f64>,
    best: Option<(Vec<SwitchingState>, Vec<f64>, f64)>,
}

impl Exhaustive<'_> {
    fn descend(&mut self, depth: usize, i: Vec3, vd: CapacitorDifferences, u_prev: SwitchingState, acc: f64) {
        if depth == self.ctl.stages.len() {
            if self.best.as_ref().is_none_or(|b| acc < b.2) {
                self.best = Some((self.prefix.clone(), self.prefix_costs.clone(), acc));
            }
            return;
        }
        let stage = &self.ctl.stages[depth];
        for u in SwitchingState::all() {
            let (cost, i_next, vd_next) = stage.evaluate(
                u,
                &i,
                &vd,
                &u_prev,
                &self.inputs.i_ref,
                &self.inputs.v_dm,
                &self.ctl.cfg,
            );
            self.prefix.push(*u);
            self.prefix_costs.push(cost);
            self.descend(depth + 1, i_next, vd_next, *u, acc + cost);
            self.prefix.pop();
            self.prefix_costs.pop();
        }
    }
}

/// Standard finite-control-set MPC: one state held for the whole period.
pub fn standard_mpc_step(
    inputs: &ControllerInputs,
    model: &PredictionModel,
    cfg: &CostConfig,
) -> Result<ControlDecision> {
    Ok(MultirateController::standard(*model, *cfg)?.step(inputs))
}

/// Suboptimal multirate MPC: greedy choice per subinterval.
pub fn multirate_mpc_step(
    inputs: &ControllerInputs,
    grid: &SubintervalGrid,
    params: &PlantParams,
    cfg: &CostConfig,
) -> Result<ControlDecision> {
    Ok(MultirateController::new(params, grid, *cfg)?.step(inputs))
}

/// Exact minimisation over every subinterval sequence; at most three subintervals.
pub fn exhaustive_multirate_step(
    inputs: &ControllerInputs,
    grid: &SubintervalGrid,
    params: &PlantParams,
    cfg: &CostConfig,
) -> Result<ControlDecision> {
    if grid.len() > EXHAUSTIVE_MAX_SUBINTERVALS {
        return Err(Error::TooManySubintervals(grid.len()));
    }
    MultirateController::new(params, grid, *cfg)?.exhaustive_step(inputs)
}
