//! Controller-side discrete models.
//!
//! The current model is the forward-Euler discretisation
//! `i+ = (1 - R dt / L) i + V_dc dt / (4 L) u`, which assumes balanced
//! capacitors. It deliberately differs from the exact flow in [`crate::plant`].

use serde::{Deserialize, Serialize};

use crate::converter::{
    coupling_matrix_with, mat_vec, CapacitorDifferences, CouplingTable, SwitchingState, Vec3,
};
use crate::error::{positive, Error, Result};
use crate::plant::PlantParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionModel {
    /// Current retention factor.
    pub a: f64,
    /// Amperes gained per level over `dt`.
    pub b: f64,
    /// Time span of one model step, seconds.
    pub dt: f64,
}

impl PredictionModel {
    /// Builds the model for an interval of length `dt`. `r` may be zero.
    pub fn over(r: f64, l: f64, v_dc: f64, dt: f64) -> Result<Self> {
        positive("L", l)?;
        positive("V_dc", v_dc)?;
        positive("dt", dt)?;
        if !(r >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "R",
                requirement: ">= 0",
                value: r,
            });
        }
        let ratio = r * dt / l;
        if ratio >= 1.0 {
            return Err(Error::ModelInvalid(ratio));
        }
        Ok(PredictionModel {
            a: 1.0 - ratio,
            b: v_dc * dt / (4.0 * l),
            dt,
        })
    }
}

/// Subinterval boundaries `alpha_1 < ... < alpha_N = 1` as fractions of `Ts`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubintervalGrid {
    alphas: Vec<f64>,
    ts: f64,
}

impl SubintervalGrid {
    pub fn new(alphas: Vec<f64>, ts: f64) -> Result<Self> {
        positive("Ts", ts)?;
        if alphas.is_empty() {
            return Err(Error::InvalidGrid("at least one subinterval required".into()));
        }
        if alphas.iter().any(|a| !(*a > 0.0 && *a <= 1.0)) {
            return Err(Error::InvalidGrid(format!("fractions must lie in (0, 1]: {alphas:?}")));
        }
        if alphas.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidGrid(format!("fractions must be strictly ascending: {alphas:?}")));
        }
        if *alphas.last().unwrap() != 1.0 {
            return Err(Error::InvalidGrid("last fraction must be exactly 1".into()));
        }
        Ok(SubintervalGrid { alphas, ts })
    }

    /// A single subinterval covering the whole period.
    pub fn single(ts: f64) -> Result<Self> {
        SubintervalGrid::new(vec![1.0], ts)
    }

    /// `n` equal subintervals.
    pub fn uniform(n: usize, ts: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidGrid("at least one subinterval required".into()));
        }
        let mut alphas: Vec<f64> = (1..n).map(|p| p as f64 / n as f64).collect();
        alphas.push(1.0);
        SubintervalGrid::new(alphas, ts)
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn ts(&self) -> f64 {
        self.ts
    }

    pub fn len(&self) -> usize {
        self.alphas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alphas.is_empty()
    }

    /// Start of each subinterval relative to the period start, seconds.
    pub fn offsets(&self) -> Vec<f64> {
        std::iter::once(0.0)
            .chain(self.alphas[..self.len() - 1].iter().map(|a| a * self.ts))
            .collect()
    }

    /// Model step lengths `(alpha_p - alpha_{p-1}) Ts`.
    pub fn model_durations(&self) -> Vec<f64> {
        let mut prev = 0.0;
        self.alphas
            .iter()
            .map(|a| {
                let d = (a - prev) * self.ts;
                prev = *a;
                d
            })
            .collect()
    }

    /// Plant hold lengths. Identical to [`Self::model_durations`] except that
    /// the last entry absorbs rounding so the holds add up to `Ts`.
    pub fn hold_durations(&self) -> Vec<f64> {
        let mut d = self.model_durations();
        let n = d.len();
        let head: f64 = d[..n - 1].iter().sum();
        d[n - 1] = self.ts - head;
        d
    }
}

/// Model spanning one full sampling period.
pub fn full_period_model(params: &PlantParams, ts: f64) -> Result<PredictionModel> {
    PredictionModel::over(params.r, params.l, params.v_dc, ts)
}

/// One model per subinterval of `grid`.
pub fn subinterval_models(params: &PlantParams, grid: &SubintervalGrid) -> Result<Vec<PredictionModel>> {
    if params.r * grid.ts() / params.l >= 1.0 {
        return Err(Error::ModelInvalid(params.r * grid.ts() / params.l));
    }
    grid.model_durations()
        .into_iter()
        .map(|dt| PredictionModel::over(params.r, params.l, params.v_dc, dt))
        .collect()
}

#[inline]
pub fn predict_current(model: &PredictionModel, i: &Vec3, u: &SwitchingState) -> Vec3 {
    let u = u.as_vec3();
    [
        model.a * i[0] + model.b * u[0],
        model.a * i[1] + model.b * u[1],
        model.a * i[2] + model.b * u[2],
    ]
}

/// `vd + M(u) i_next`, using the end-of-interval current.
pub fn predict_vd(
    vd: &CapacitorDifferences,
    u: &SwitchingState,
    i_next: &Vec3,
    dt: f64,
    capacitance: f64,
) -> Result<CapacitorDifferences> {
    predict_vd_with(vd, u, i_next, dt, capacitance, CouplingTable::Equations)
}

pub fn predict_vd_with(
    vd: &CapacitorDifferences,
    u: &SwitchingState,
    i_next: &Vec3,
    dt: f64,
    capacitance: f64,
    table: CouplingTable,
) -> Result<CapacitorDifferences> {
    let m = coupling_matrix_with(u, dt, capacitance, table)?;
    let d = mat_vec(&m, i_next);
    Ok(CapacitorDifferences::new(vd.vd1 + d[0], vd.vd2 + d[1], vd.vd3 + d[2]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn nominal() -> PlantParams {
        PlantParams::default()
    }

    fn u(a: i32, b: i32, c: i32) -> SwitchingState {
        SwitchingState::new(a, b, c).unwrap()
    }

    #[test]
    fn full_period_coefficients() {
        let m = full_period_model(&nominal(), 20e-6).unwrap();
        assert_eq!(m.a, 0.88);
        assert_eq!(m.b, 0.75);
        assert_eq!(m.dt, 20e-6);
    }

    #[test]
    fn continuous_limits() {
        let m = full_period_model(&nominal(), 1e-15).unwrap();
        assert!((1.0 - m.a) < 1e-8 && m.b < 1e-8);
        let lossless = PredictionModel::over(0.0, 5e-3, 750.0, 20e-6).unwrap();
        assert_eq!(lossless.a, 1.0);
    }

    #[test]
    fn rejects_long_periods() {
        // R Ts / L = 1
        let err = full_period_model(&nominal(), 5e-3 / 30.0).unwrap_err();
        assert!(matches!(err, Error::ModelInvalid(_)));
        assert!(full_period_model(&nominal(), 1e-3).is_err());
    }

    #[test]
    fn subinterval_coefficients() {
        let grid = SubintervalGrid::new(vec![0.45, 0.75, 1.0], 20e-6).unwrap();
        let models = subinterval_models(&nominal(), &grid).unwrap();
        let a = [0.946, 0.964, 0.970];
        let b = [0.3375, 0.225, 0.1875];
        for p in 0..3 {
            assert!((models[p].a - a[p]).abs() < 1e-12);
            assert!((models[p].b - b[p]).abs() < 1e-12);
        }
        let total: f64 = models.iter().map(|m| m.dt).sum();
        assert!((total - 20e-6).abs() < 1e-18);
    }

    #[test]
    fn degenerate_grid_is_full_period() {
        let grid = SubintervalGrid::single(20e-6).unwrap();
        let models = subinterval_models(&nominal(), &grid).unwrap();
        assert_eq!(models, vec![full_period_model(&nominal(), 20e-6).unwrap()]);
    }

    #[test]
    fn grid_validation() {
        assert!(SubintervalGrid::new(vec![], 1e-5).is_err());
        assert!(SubintervalGrid::new(vec![0.5, 0.9], 1e-5).is_err());
        assert!(SubintervalGrid::new(vec![0.5, 0.5, 1.0], 1e-5).is_err());
        assert!(SubintervalGrid::new(vec![0.7, 0.3, 1.0], 1e-5).is_err());
        assert!(SubintervalGrid::new(vec![0.0, 1.0], 1e-5).is_err());
        assert!(SubintervalGrid::new(vec![1.0], 0.0).is_err());
        let g = SubintervalGrid::new(vec![0.45, 0.75, 1.0], 20e-6).unwrap();
        let off = g.offsets();
        assert_eq!(off[0], 0.0);
        assert!((off[1] - 9e-6).abs() < 1e-18 && (off[2] - 15e-6).abs() < 1e-18);
        let holds = g.hold_durations();
        assert_eq!(holds[0] + holds[1] + holds[2], 20e-6);
    }

    #[test]
    fn uniform_grid() {
        let g = SubintervalGrid::uniform(4, 1e-5).unwrap();
        assert_eq!(g.alphas(), &[0.25, 0.5, 0.75, 1.0]);
        assert!(SubintervalGrid::uniform(0, 1e-5).is_err());
    }

    #[test]
    fn predict_current_examples() {
        let m = full_period_model(&nominal(), 20e-6).unwrap();
        assert_eq!(predict_current(&m, &[0.0; 3], &u(2, -2, 0)), [1.5, -1.5, 0.0]);
        assert_eq!(
            predict_current(&m, &[3.0, -2.0, 1.0], &SwitchingState::ZERO),
            [0.88 * 3.0, 0.88 * -2.0, 0.88]
        );
        let y = predict_current(&m, &[10.0, 0.0, 0.0], &u(1, 0, 0));
        assert!((y[0] - 9.55).abs() < 1e-12);
        assert_eq!(&y[1..], &[0.0, 0.0]);
    }

    #[test]
    fn predict_vd_examples() {
        let vd = CapacitorDifferences::new(1.0, 2.0, 3.0);
        let same = predict_vd(&vd, &SwitchingState::ZERO, &[5.0, -1.0, 2.0], 20e-6, 1e-3).unwrap();
        assert_eq!(same, vd);

        let z = CapacitorDifferences::ZERO;
        let r = predict_vd(&z, &u(1, 1, 1), &[4.0, -1.0, -3.0], 20e-6, 1e-3).unwrap();
        assert!(r.as_array().iter().all(|x| x.abs() < 1e-15));

        let r = predict_vd(&z, &u(1, 0, 0), &[10.0, 0.0, 0.0], 20e-6, 1e-3).unwrap();
        assert!(r.vd1.abs() < 1e-15);
        assert!((r.vd2 + 0.2).abs() < 1e-12);
        assert!((r.vd3 - 0.2).abs() < 1e-12);

        assert!(predict_vd(&z, &u(1, 0, 0), &[1.0; 3], 0.0, 1e-3).is_err());
    }

    #[test]
    fn composed_subintervals_stay_close_to_full_period() {
        use rand::{Rng, SeedableRng};
        let params = nominal();
        let ts = 20e-6;
        let grid = SubintervalGrid::new(vec![0.45, 0.75, 1.0], ts).unwrap();
        let models = subinterval_models(&params, &grid).unwrap();
        let full = full_period_model(&params, ts).unwrap();
        let x = params.r * ts / params.l;
        let mut rng = rand::rngs::StdRng::seed_from_u64(3);
        for _ in 0..1000 {
            let i: Vec3 = std::array::from_fn(|_| rng.gen_range(-20.0..20.0));
            let uu = SwitchingState::from_index(rng.gen_range(0..125)).unwrap();
            let mut chained = i;
            for m in &models {
                chained = predict_current(m, &chained, &uu);
            }
            let direct = predict_current(&full, &i, &uu);
            let bu = uu.as_vec3();
            for k in 0..3 {
                // state term differs at second order, input term at first
                let bound = x * x / 2.0 * i[k].abs() + x / 2.0 * (full.b * bu[k]).abs();
                assert!((chained[k] - direct[k]).abs() <= bound + 1e-12);
            }
        }
    }

    proptest! {
        #[test]
        fn prediction_is_affine(
            i1 in prop::array::uniform3(-50.0f64..50.0),
            i2 in prop::array::uniform3(-50.0f64..50.0),
            idx in 0usize..125,
        ) {
            let m = full_period_model(&nominal(), 20e-6).unwrap();
            let zero = SwitchingState::ZERO;
            let sum = [i1[0] + i2[0], i1[1] + i2[1], i1[2] + i2[2]];
            let lhs = predict_current(&m, &sum, &zero);
            let a = predict_current(&m, &i1, &zero);
            let b = predict_current(&m, &i2, &zero);
            for k in 0..3 {
                prop_assert!((lhs[k] - (a[k] + b[k])).abs() < 1e-12);
            }
            let uu = SwitchingState::from_index(idx).unwrap();
            let y = predict_current(&m, &[0.0; 3], &uu);
            for k in 0..3 {
                prop_assert_eq!(y[k], m.b * uu.as_vec3()[k]);
            }
        }
    }
}
