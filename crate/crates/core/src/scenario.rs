//! Scenario files.
//!
//! A scenario is a flat list of dotted keys, one per line, parsed as TOML:
//!
//! ```text
//! run.name = "multirate"
//! plant.R = 30            # ohm
//! control.alphas = [0.45, 0.75, 1.0]
//! ```
//!
//! Every key is optional and defaults to the reference operating point.
//! Unknown keys are rejected.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::controller::{CostConfig, CostWeights, TrackingNorm};
use crate::converter::{CapacitorDifferences, CouplingTable, Vec3};
use crate::error::{Error, Result};
use crate::plant::{Neutral, PlantParams, PlantState};
use crate::predictor::SubintervalGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    /// One switching state per sampling period.
    Standard,
    /// Greedy choice per subinterval.
    Multirate,
    /// Exact search over all subinterval sequences.
    Exhaustive,
}

impl Algorithm {
    pub fn as_str(&self) -> &'static str {
        match self {
            Algorithm::Standard => "standard",
            Algorithm::Multirate => "multirate",
            Algorithm::Exhaustive => "exhaustive",
        }
    }
}

/// Balanced three-phase sinusoidal current reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reference {
    /// Peak amplitude, A.
    pub amplitude: f64,
    /// Hz.
    pub frequency: f64,
    /// Phase angles of a, b, c in degrees.
    pub phase_offsets_deg: [f64; 3],
}

impl Default for Reference {
    fn default() -> Self {
        Reference {
            amplitude: 12.0,
            frequency: 50.0,
            phase_offsets_deg: [0.0, -120.0, -240.0],
        }
    }
}

impl Reference {
    pub fn at(&self, t: f64) -> Vec3 {
        let w = 2.0 * PI * self.frequency * t;
        std::array::from_fn(|k| self.amplitude * (w + self.phase_offsets_deg[k].to_radians()).sin())
    }

    pub fn period(&self) -> f64 {
        1.0 / self.frequency
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub plant: PlantParams,
    /// Sampling period, s.
    pub ts: f64,
    pub algorithm: Algorithm,
    /// Present for the multirate and exhaustive algorithms.
    pub grid: Option<SubintervalGrid>,
    pub cost: CostConfig,
    pub reference: Reference,
    /// Evaluate the reference at each subinterval start instead of once per period.
    pub reference_per_subinterval: bool,
    /// Simulated time, s.
    pub duration: f64,
    /// Fundamental periods discarded before steady-state metrics.
    pub warmup_periods: usize,
    /// Log samples per second.
    pub log_rate: f64,
    pub initial: PlantState,
    /// Highest harmonic order in THD.
    pub max_order: usize,
    /// Balancing band, V.
    pub band: f64,
}

impl Default for Scenario {
    fn default() -> Self {
        let plant = PlantParams::default();
        Scenario {
            name: "standard".into(),
            plant,
            ts: 20e-6,
            algorithm: Algorithm::Standard,
            grid: None,
            cost: CostConfig::new(CostWeights::default(), plant.c),
            reference: Reference::default(),
            reference_per_subinterval: false,
            duration: 0.1,
            warmup_periods: 2,
            log_rate: 1e6,
            initial: PlantState::zero(),
            max_order: 1000,
            band: 1.0,
        }
    }
}

impl Scenario {
    /// Reference operating point with standard MPC.
    pub fn reference_standard() -> Self {
        Scenario::default()
    }

    /// Reference operating point with the three-subinterval multirate controller.
    pub fn reference_multirate() -> Self {
        Scenario {
            name: "multirate".into(),
            algorithm: Algorithm::Multirate,
            grid: Some(SubintervalGrid::new(vec![0.45, 0.75, 1.0], 20e-6).expect("valid grid")),
            ..Scenario::default()
        }
    }

    pub fn with_grid(mut self, alphas: Vec<f64>) -> Result<Self> {
        self.grid = Some(SubintervalGrid::new(alphas, self.ts)?);
        if self.algorithm == Algorithm::Standard {
            self.algorithm = Algorithm::Multirate;
        }
        Ok(self)
    }

    /// Number of sampling periods simulated.
    pub fn periods(&self) -> usize {
        (self.duration / self.ts).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        self.plant.validate()?;
        self.cost.weights.validate()?;
        let bad = |msg: String| Err(Error::Scenario(msg));
        if !(self.ts > 0.0) {
            return bad(format!("control.Ts must be > 0, got {}", self.ts));
        }
        if !(self.duration > 0.0) {
            return bad(format!("run.duration must be > 0, got {}", self.duration));
        }
        let periods = self.duration / self.ts;
        if (periods - periods.round()).abs() > 1e-6 {
            return bad("run.duration must be a whole number of sampling periods".into());
        }
        if !(self.reference.frequency > 0.0) {
            return bad("reference.frequency must be > 0".into());
        }
        if !(self.log_rate > 0.0) {
            return bad("run.log_rate must be > 0".into());
        }
        if !(self.cost.capacitance > 0.0) {
            return bad("control.C must be > 0".into());
        }
        match (&self.algorithm, &self.grid) {
            (Algorithm::Standard, _) => {}
            (_, None) => return bad("control.alphas required for multirate and exhaustive".into()),
            (_, Some(g)) if g.ts() != self.ts => return bad("grid period differs from control.Ts".into()),
            _ => {}
        }
        Ok(())
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let mut s = Scenario::from_toml_str(&text)?;
        if s.name.is_empty() {
            s.name = path
                .file_stem()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
        }
        Ok(s)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: ScenarioFile = toml::from_str(text).map_err(|e| Error::Scenario(e.to_string()))?;
        file.into_scenario()
    }

    /// Serialises to the dotted-key format accepted by [`Scenario::from_toml_str`].
    pub fn to_toml_string(&self) -> String {
        let mut out = String::new();
        let mut line = |k: &str, v: String| out.push_str(&format!("{k} = {v}\n"));
        let list = |v: &[f64]| format!("[{}]", v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", "));
        line("run.name", format!("{:?}", self.name));
        line("run.duration", format!("{:?}", self.duration));
        line("run.warmup_periods", self.warmup_periods.to_string());
        line("run.log_rate", format!("{:?}", self.log_rate));
        line("plant.R", format!("{:?}", self.plant.r));
        line("plant.L", format!("{:?}", self.plant.l));
        line("plant.C", format!("{:?}", self.plant.c));
        line("plant.V_dc", format!("{:?}", self.plant.v_dc));
        line("plant.capacitor_coupling", self.plant.capacitor_coupling.to_string());
        line("plant.neutral", quoted(self.plant.neutral));
        line("control.Ts", format!("{:?}", self.ts));
        line("control.algorithm", format!("{:?}", self.algorithm.as_str()));
        if let Some(g) = &self.grid {
            line("control.alphas", list(g.alphas()));
        }
        line("control.lambda_I", format!("{:?}", self.cost.weights.lambda_i));
        line("control.lambda_C", format!("{:?}", self.cost.weights.lambda_c));
        line("control.lambda_S", format!("{:?}", self.cost.weights.lambda_s));
        line("control.tracking_norm", quoted(self.cost.tracking_norm));
        line("control.coupling_table", quoted(self.cost.coupling_table));
        line("control.C", format!("{:?}", self.cost.capacitance));
        line("control.reference_per_subinterval", self.reference_per_subinterval.to_string());
        line("reference.amplitude", format!("{:?}", self.reference.amplitude));
        line("reference.frequency", format!("{:?}", self.reference.frequency));
        line("reference.phase_offsets_deg", list(&self.reference.phase_offsets_deg));
        line("initial.i", list(&self.initial.i));
        line("initial.vd", list(&self.initial.vd.as_array()));
        line("metrics.max_order", self.max_order.to_string());
        line("metrics.band", format!("{:?}", self.band));
        out
    }
}

fn quoted<T: Serialize>(v: T) -> String {
    toml::Value::try_from(v)
        .map(|v| v.to_string())
        .unwrap_or_default()
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    #[serde(default)]
    run: RunSection,
    #[serde(default)]
    plant: PlantSection,
    #[serde(default)]
    control: ControlSection,
    #[serde(default)]
    reference: ReferenceSection,
    #[serde(default)]
    initial: InitialSection,
    #[serde(default)]
    metrics: MetricsSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunSection {
    name: Option<String>,
    duration: Option<f64>,
    warmup_periods: Option<usize>,
    log_rate: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PlantSection {
    #[serde(rename = "R")]
    r: Option<f64>,
    #[serde(rename = "L")]
    l: Option<f64>,
    #[serde(rename = "C")]
    c: Option<f64>,
    #[serde(rename = "V_dc")]
    v_dc: Option<f64>,
    capacitor_coupling: Option<bool>,
    neutral: Option<Neutral>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ControlSection {
    #[serde(rename = "Ts")]
    ts: Option<f64>,
    algorithm: Option<Algorithm>,
    alphas: Option<Vec<f64>>,
    #[serde(rename = "lambda_I")]
    lambda_i: Option<f64>,
    #[serde(rename = "lambda_C")]
    lambda_c: Option<f64>,
    #[serde(rename = "lambda_S")]
    lambda_s: Option<f64>,
    tracking_norm: Option<TrackingNorm>,
    coupling_table: Option<CouplingTable>,
    #[serde(rename = "C")]
    c: Option<f64>,
    reference_per_subinterval: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReferenceSection {
    amplitude: Option<f64>,
    frequency: Option<f64>,
    phase_offsets_deg: Option<[f64; 3]>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct InitialSection {
    i: Option<[f64; 3]>,
    vd: Option<[f64; 3]>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct MetricsSection {
    max_order: Option<usize>,
    band: Option<f64>,
}

impl ScenarioFile {
    fn into_scenario(self) -> Result<Scenario> {
        let d = Scenario::default();
        let p = self.plant;
        let plant = PlantParams {
            r: p.r.unwrap_or(d.plant.r),
            l: p.l.unwrap_or(d.plant.l),
            c: p.c.unwrap_or(d.plant.c),
            v_dc: p.v_dc.unwrap_or(d.plant.v_dc),
            capacitor_coupling: p.capacitor_coupling.unwrap_or(d.plant.capacitor_coupling),
            neutral: p.neutral.unwrap_or(d.plant.neutral),
        };
        let c = self.control;
        let ts = c.ts.unwrap_or(d.ts);
        let algorithm = c.algorithm.unwrap_or(if c.alphas.is_some() {
            Algorithm::Multirate
        } else {
            Algorithm::Standard
        });
        let grid = c.alphas.map(|a| SubintervalGrid::new(a, ts)).transpose()?;
        let weights = CostWeights {
            lambda_i: c.lambda_i.unwrap_or(d.cost.weights.lambda_i),
            lambda_c: c.lambda_c.unwrap_or(d.cost.weights.lambda_c),
            lambda_s: c.lambda_s.unwrap_or(d.cost.weights.lambda_s),
        };
        let cost = CostConfig {
            weights,
            tracking_norm: c.tracking_norm.unwrap_or_default(),
            coupling_table: c.coupling_table.unwrap_or_default(),
            capacitance: c.c.unwrap_or(plant.c),
        };
        let r = self.reference;
        let reference = Reference {
            amplitude: r.amplitude.unwrap_or(d.reference.amplitude),
            frequency: r.frequency.unwrap_or(d.reference.frequency),
            phase_offsets_deg: r.phase_offsets_deg.unwrap_or(d.reference.phase_offsets_deg),
        };
        let initial = PlantState::new(
            0.0,
            self.initial.i.unwrap_or([0.0; 3]),
            CapacitorDifferences::from_array(self.initial.vd.unwrap_or([0.0; 3])),
        );
        let scenario = Scenario {
            name: self.run.name.unwrap_or_default(),
            plant,
            ts,
            algorithm,
            grid,
            cost,
            reference,
            reference_per_subinterval: c.reference_per_subinterval.unwrap_or(false),
            duration: self.run.duration.unwrap_or(d.duration),
            warmup_periods: self.run.warmup_periods.unwrap_or(d.warmup_periods),
            log_rate: self.run.log_rate.unwrap_or(d.log_rate),
            initial,
            max_order: self.metrics.max_order.unwrap_or(d.max_order),
            band: self.metrics.band.unwrap_or(d.band),
        };
        scenario.validate()?;
        Ok(scenario)
    }
}
