//! Combinatorial structure of the five-level diode-clamped converter.
//!
//! Each phase leg selects one of five clamping taps. The tap index is the
//! phase level `-2..=2`; level `k` corresponds to switching row `k + 3` of the
//! ladder (all four upper devices off for `-2`, all on for `+2`).

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{positive, Error, Result};

pub type Vec3 = [f64; 3];
pub type Mat3 = [[f64; 3]; 3];

/// Integer output level of one phase leg, in units of `V_dc / 4`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "i32", into = "i32")]
pub struct PhaseLevel(i8);

impl PhaseLevel {
    pub const MIN: PhaseLevel = PhaseLevel(-2);
    pub const ZERO: PhaseLevel = PhaseLevel(0);
    pub const MAX: PhaseLevel = PhaseLevel(2);

    /// All five levels in ascending order.
    pub const ALL: [PhaseLevel; 5] = [
        PhaseLevel(-2),
        PhaseLevel(-1),
        PhaseLevel(0),
        PhaseLevel(1),
        PhaseLevel(2),
    ];

    pub fn new(value: i32) -> Result<Self> {
        if (-2..=2).contains(&value) {
            Ok(PhaseLevel(value as i8))
        } else {
            Err(Error::InvalidLevel(value))
        }
    }

    #[inline]
    pub fn value(self) -> i32 {
        self.0 as i32
    }

    /// Ladder row `j in 1..=5` whose indicator `f_ij` is set for this level.
    #[inline]
    pub fn switching_row(self) -> usize {
        (self.0 + 3) as usize
    }
}

impl TryFrom<i32> for PhaseLevel {
    type Error = Error;
    fn try_from(value: i32) -> Result<Self> {
        PhaseLevel::new(value)
    }
}

impl From<PhaseLevel> for i32 {
    fn from(level: PhaseLevel) -> i32 {
        level.value()
    }
}

impl fmt::Display for PhaseLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Levels of phases a, b, c.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SwitchingState(pub [PhaseLevel; 3]);

impl SwitchingState {
    pub const ZERO: SwitchingState = SwitchingState([PhaseLevel::ZERO; 3]);

    /// Number of distinct switching states.
    pub const COUNT: usize = 125;

    pub fn new(a: i32, b: i32, c: i32) -> Result<Self> {
        Ok(SwitchingState([
            PhaseLevel::new(a)?,
            PhaseLevel::new(b)?,
            PhaseLevel::new(c)?,
        ]))
    }

    pub fn levels(&self) -> [i32; 3] {
        [self.0[0].value(), self.0[1].value(), self.0[2].value()]
    }

    /// Levels as floating-point values, for the prediction model.
    pub fn as_vec3(&self) -> Vec3 {
        [
            self.0[0].value() as f64,
            self.0[1].value() as f64,
            self.0[2].value() as f64,
        ]
    }

    /// Total level distance to another state, i.e. the commutation count
    /// of switching between them.
    pub fn distance(&self, other: &SwitchingState) -> u32 {
        (0..3)
            .map(|k| (self.0[k].value() - other.0[k].value()).unsigned_abs())
            .sum()
    }

    /// Position in the lexicographic enumeration order.
    pub fn index(&self) -> usize {
        let [a, b, c] = self.levels();
        ((a + 2) * 25 + (b + 2) * 5 + (c + 2)) as usize
    }

    /// Inverse of [`SwitchingState::index`].
    pub fn from_index(index: usize) -> Option<Self> {
        if index >= Self::COUNT {
            return None;
        }
        let level = |v: usize| PhaseLevel(v as i8 - 2);
        Some(SwitchingState([
            level(index / 25),
            level((index / 5) % 5),
            level(index % 5),
        ]))
    }

    /// All 125 states, lexicographic from `(-2,-2,-2)` to `(2,2,2)`.
    pub fn all() -> &'static [SwitchingState; 125] {
        &ALL_STATES
    }
}

impl fmt::Display for SwitchingState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.0[0], self.0[1], self.0[2])
    }
}

static ALL_STATES: [SwitchingState; 125] = {
    let mut out = [SwitchingState::ZERO; 125];
    let mut n = 0;
    while n < 125 {
        out[n] = SwitchingState([
            PhaseLevel((n / 25) as i8 - 2),
            PhaseLevel(((n / 5) % 5) as i8 - 2),
            PhaseLevel((n % 5) as i8 - 2),
        ]);
        n += 1;
    }
    out
};

/// The four DC-link capacitor voltages, top (`vc1`) to bottom (`vc4`).
/// Levels `+1`/`+2` tap `vc2` and `vc1 + vc2` above the midpoint, levels
/// `-1`/`-2` tap `vc3` and `vc3 + vc4` below it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapacitorVoltages {
    pub vc1: f64,
    pub vc2: f64,
    pub vc3: f64,
    pub vc4: f64,
}

impl CapacitorVoltages {
    pub fn balanced(v_dc: f64) -> Self {
        let q = v_dc / 4.0;
        CapacitorVoltages {
            vc1: q,
            vc2: q,
            vc3: q,
            vc4: q,
        }
    }

    /// Reconstructs the four voltages from the link voltage and differences.
    pub fn from_differences(v_dc: f64, vd: &CapacitorDifferences) -> Self {
        let vc4 = (v_dc - vd.vd1 - vd.vd2 - 2.0 * vd.vd3) / 4.0;
        let vc3 = vc4 + vd.vd3;
        let vc1 = vc4 + vd.vd1;
        let vc2 = vc3 + vd.vd2;
        let caps = CapacitorVoltages { vc1, vc2, vc3, vc4 };
        if !caps.all_positive() {
            log::warn!("capacitor voltages not all positive: {caps:?}");
        }
        caps
    }

    pub fn sum(&self) -> f64 {
        self.vc1 + self.vc2 + self.vc3 + self.vc4
    }

    pub fn all_positive(&self) -> bool {
        self.vc1 > 0.0 && self.vc2 > 0.0 && self.vc3 > 0.0 && self.vc4 > 0.0
    }

    pub fn differences(&self) -> CapacitorDifferences {
        CapacitorDifferences {
            vd1: self.vc1 - self.vc4,
            vd2: self.vc2 - self.vc3,
            vd3: self.vc3 - self.vc4,
        }
    }
}

/// Capacitor voltage differences `(vc1 - vc4, vc2 - vc3, vc3 - vc4)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CapacitorDifferences {
    pub vd1: f64,
    pub vd2: f64,
    pub vd3: f64,
}

impl CapacitorDifferences {
    pub const ZERO: CapacitorDifferences = CapacitorDifferences {
        vd1: 0.0,
        vd2: 0.0,
        vd3: 0.0,
    };

    pub fn new(vd1: f64, vd2: f64, vd3: f64) -> Self {
        CapacitorDifferences { vd1, vd2, vd3 }
    }

    pub fn as_array(&self) -> Vec3 {
        [self.vd1, self.vd2, self.vd3]
    }

    pub fn from_array(v: Vec3) -> Self {
        CapacitorDifferences::new(v[0], v[1], v[2])
    }

    pub fn is_zero(&self) -> bool {
        self.vd1 == 0.0 && self.vd2 == 0.0 && self.vd3 == 0.0
    }
}

/// Which per-level balancing columns to use.
///
/// `Equations` derives the columns from the differential equations of the
/// capacitor differences. `PrintedTable` uses the alternate table in which the
/// third components of levels `-1` and `+1` are exchanged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplingTable {
    #[default]
    Equations,
    PrintedTable,
}

/// Output voltage of a phase leg with respect to the DC-link midpoint.
pub fn phase_voltage(level: PhaseLevel, caps: &CapacitorVoltages) -> f64 {
    match level.value() {
        -2 => -(caps.vc3 + caps.vc4),
        -1 => -caps.vc3,
        0 => 0.0,
        1 => caps.vc2,
        _ => caps.vc1 + caps.vc2,
    }
}

/// Phase voltage as a signed combination of `(vc1, vc2, vc3, vc4)`.
pub fn phase_voltage_weights(level: PhaseLevel) -> [i32; 4] {
    match level.value() {
        -2 => [0, 0, -1, -1],
        -1 => [0, 0, -1, 0],
        0 => [0, 0, 0, 0],
        1 => [0, 1, 0, 0],
        _ => [1, 1, 0, 0],
    }
}

/// Coefficients `(c1, c2, c3)` such that a phase current `i` at this level
/// contributes `(c1, c2, c3) * i` to `C * d(v_d)/dt`.
pub fn balancing_column(level: PhaseLevel) -> [i32; 3] {
    balancing_column_with(level, CouplingTable::Equations)
}

pub fn balancing_column_with(level: PhaseLevel, table: CouplingTable) -> [i32; 3] {
    match (level.value(), table) {
        (-2, _) | (2, _) => [-1, -1, 0],
        (-1, CouplingTable::Equations) => [0, -1, 0],
        (-1, CouplingTable::PrintedTable) => [0, -1, 1],
        (1, CouplingTable::Equations) => [0, -1, 1],
        (1, CouplingTable::PrintedTable) => [0, -1, 0],
        _ => [0, 0, 0],
    }
}

/// `(dt / C) * [m_a m_b m_c]`, column `k` being the balancing column of phase `k`.
pub fn coupling_matrix(u: &SwitchingState, dt: f64, capacitance: f64) -> Result<Mat3> {
    coupling_matrix_with(u, dt, capacitance, CouplingTable::Equations)
}

pub fn coupling_matrix_with(
    u: &SwitchingState,
    dt: f64,
    capacitance: f64,
    table: CouplingTable,
) -> Result<Mat3> {
    positive("dt", dt)?;
    positive("C", capacitance)?;
    let scale = dt / capacitance;
    let mut m = [[0.0; 3]; 3];
    for (col, level) in u.0.iter().enumerate() {
        let coeffs = balancing_column_with(*level, table);
        for row in 0..3 {
            m[row][col] = scale * coeffs[row] as f64;
        }
    }
    Ok(m)
}

/// `m * x`, summed left to right.
#[inline]
pub fn mat_vec(m: &Mat3, x: &Vec3) -> Vec3 {
    [
        m[0][0] * x[0] + m[0][1] * x[1] + m[0][2] * x[2],
        m[1][0] * x[0] + m[1][1] * x[1] + m[1][2] * x[2],
        m[2][0] * x[0] + m[2][1] * x[1] + m[2][2] * x[2],
    ]
}
