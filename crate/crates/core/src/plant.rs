//! LCL filter between an ideal averaged inverter and a stiff grid, modelled
//! in the stationary frame in SI units.

use std::ops::{Add, Mul};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frames::{inverse_park, park, AlphaBetaPair, DqPair, PerUnitBase};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantParams {
    /// Inverter-side filter inductance, H.
    pub l_f: f64,
    /// Series resistance of `l_f`, Ω.
    pub r_f: f64,
    /// Filter capacitance, F.
    pub c_f: f64,
    /// Grid-side (line) inductance, H.
    pub l_g: f64,
    /// Series resistance of `l_g`, Ω.
    pub r_g: f64,
    /// Grid phase-peak voltage, V.
    pub v_g_amp: f64,
    /// Grid angular frequency, rad/s.
    pub omega_g: f64,
}

impl Default for PlantParams {
    /// The 2 kW hardware rig: 5 mH / 30 µF / 4 mH on a 200 V, 50 Hz grid.
    fn default() -> Self {
        Self {
            l_f: 5e-3,
            r_f: 0.05,
            c_f: 30e-6,
            l_g: 4e-3,
            r_g: 0.4,
            v_g_amp: 200.0 * 2f64.sqrt() / 3f64.sqrt(),
            omega_g: 2.0 * std::f64::consts::PI * 50.0,
        }
    }
}

impl PlantParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("l_f", self.l_f), ("c_f", self.c_f), ("l_g", self.l_g), ("omega_g", self.omega_g)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(name, format!("must be finite and > 0, got {v}")));
            }
        }
        for (name, v) in [("r_f", self.r_f), ("r_g", self.r_g), ("v_g_amp", self.v_g_amp)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(name, format!("must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Physical states of the filter. Used both for values (V, A) and for their
/// time derivatives (V/s, A/s).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PlantState {
    /// Capacitor voltage.
    pub v_c: AlphaBetaPair,
    /// Grid-side inductor current.
    pub i_g: AlphaBetaPair,
    /// Inverter-side inductor current.
    pub i_l: AlphaBetaPair,
}

impl PlantState {
    pub fn is_finite(&self) -> bool {
        self.v_c.is_finite() && self.i_g.is_finite() && self.i_l.is_finite()
    }

    /// Converts SI values to per-unit.
    pub fn to_pu(&self, base: &PerUnitBase) -> Self {
        Self {
            v_c: self.v_c.scale(1.0 / base.v_base),
            i_g: self.i_g.scale(1.0 / base.i_base),
            i_l: self.i_l.scale(1.0 / base.i_base),
        }
    }

    pub fn from_pu(&self, base: &PerUnitBase) -> Self {
        Self {
            v_c: self.v_c.scale(base.v_base),
            i_g: self.i_g.scale(base.i_base),
            i_l: self.i_l.scale(base.i_base),
        }
    }

    /// Energy stored in the filter, J.
    pub fn stored_energy(&self, p: &PlantParams) -> f64 {
        let sq = |x: AlphaBetaPair| x.alpha * x.alpha + x.beta * x.beta;
        // amplitude-invariant vectors carry 3/2 of the per-phase energy
        1.5 * 0.5 * (p.c_f * sq(self.v_c) + p.l_f * sq(self.i_l) + p.l_g * sq(self.i_g))
    }

    pub fn max_abs(&self) -> f64 {
        [self.v_c, self.i_g, self.i_l]
            .iter()
            .flat_map(|x| [x.alpha.abs(), x.beta.abs()])
            .fold(0.0, f64::max)
    }
}

impl Add for PlantState {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self {
            v_c: self.v_c + rhs.v_c,
            i_g: self.i_g + rhs.i_g,
            i_l: self.i_l + rhs.i_l,
        }
    }
}

impl Mul<f64> for PlantState {
    type Output = Self;
    fn mul(self, k: f64) -> Self {
        Self {
            v_c: self.v_c * k,
            i_g: self.i_g * k,
            i_l: self.i_l * k,
        }
    }
}

/// Time derivative of the filter states for inverter voltage `v_i` and grid
/// voltage `v_g`.
pub fn plant_derivative(s: &PlantState, v_i: AlphaBetaPair, v_g: AlphaBetaPair, p: &PlantParams) -> PlantState {
    PlantState {
        v_c: (s.i_l - s.i_g).scale(1.0 / p.c_f),
        i_g: (s.v_c - v_g - s.i_g.scale(p.r_g)).scale(1.0 / p.l_g),
        i_l: (v_i - s.v_c - s.i_l.scale(p.r_f)).scale(1.0 / p.l_f),
    }
}

/// Stiff-bus voltage at time `t` (phase zero at `t = 0`).
pub fn grid_voltage(t: f64, p: &PlantParams) -> AlphaBetaPair {
    AlphaBetaPair::from_angle(grid_angle(t, p)).scale(p.v_g_amp)
}

/// Unwrapped grid angle at time `t`.
pub fn grid_angle(t: f64, p: &PlantParams) -> f64 {
    p.omega_g * t
}

/// Filter states in per-unit, rotated into the grid-synchronous frame (the
/// dq frame whose d-axis is the grid voltage).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SyncPlant {
    pub v_c: DqPair,
    pub i_g: DqPair,
    pub i_l: DqPair,
}

impl SyncPlant {
    /// Views a stationary-frame SI state at time `t` in the grid frame.
    pub fn from_stationary(s: &PlantState, t: f64, base: &PerUnitBase, p: &PlantParams) -> Self {
        let pu = s.to_pu(base);
        let theta = grid_angle(t, p);
        Self {
            v_c: park(pu.v_c, theta),
            i_g: park(pu.i_g, theta),
            i_l: park(pu.i_l, theta),
        }
    }

    pub fn to_stationary(&self, t: f64, base: &PerUnitBase, p: &PlantParams) -> PlantState {
        let theta = grid_angle(t, p);
        PlantState {
            v_c: inverse_park(self.v_c, theta),
            i_g: inverse_park(self.i_g, theta),
            i_l: inverse_park(self.i_l, theta),
        }
        .from_pu(base)
    }

    pub fn components(&self) -> [f64; 6] {
        [self.v_c.d, self.v_c.q, self.i_g.d, self.i_g.q, self.i_l.d, self.i_l.q]
    }

    pub fn from_components(x: &[f64]) -> Self {
        Self {
            v_c: DqPair::new(x[0], x[1]),
            i_g: DqPair::new(x[2], x[3]),
            i_l: DqPair::new(x[4], x[5]),
        }
    }
}

/// Plant derivative in the grid-synchronous frame, pu/s, for an inverter
/// voltage `v_i` given in that frame (pu).
pub fn sync_plant_derivative(x: &SyncPlant, v_i: DqPair, base: &PerUnitBase, p: &PlantParams) -> SyncPlant {
    // at t = 0 the grid frame coincides with the stationary frame
    let s = x.to_stationary(0.0, base, p);
    let v_i = AlphaBetaPair::new(v_i.d, v_i.q).scale(base.v_base);
    let v_g = grid_voltage(0.0, p);
    let d = plant_derivative(&s, v_i, v_g, p).to_pu(base);
    let rot = |dx: AlphaBetaPair, x: DqPair| DqPair::new(dx.alpha, dx.beta) - x.quarter_turn().scale(p.omega_g);
    SyncPlant {
        v_c: rot(d.v_c, x.v_c),
        i_g: rot(d.i_g, x.i_g),
        i_l: rot(d.i_l, x.i_l),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_side_current_slope_from_grid_alone() {
        let p = PlantParams { v_g_amp: 163.3, ..Default::default() };
        let d = plant_derivative(&PlantState::default(), AlphaBetaPair::ZERO, grid_voltage(0.0, &p), &p);
        assert!((d.i_g.alpha + 40825.0).abs() < 1e-9);
        assert_eq!(d.i_g.beta, 0.0);
        assert_eq!(d.v_c, AlphaBetaPair::ZERO);
    }

    #[test]
    fn balanced_currents_hold_capacitor_voltage() {
        let p = PlantParams::default();
        let s = PlantState {
            v_c: AlphaBetaPair::new(10.0, -3.0),
            i_g: AlphaBetaPair::new(2.5, 1.0),
            i_l: AlphaBetaPair::new(2.5, 1.0),
        };
        let d = plant_derivative(&s, AlphaBetaPair::new(1.0, 2.0), AlphaBetaPair::new(-4.0, 0.5), &p);
        assert_eq!(d.v_c, AlphaBetaPair::ZERO);
    }

    #[test]
    fn grid_voltage_examples() {
        let p = PlantParams { v_g_amp: 163.3, ..Default::default() };
        assert_eq!(grid_voltage(0.0, &p), AlphaBetaPair::new(163.3, 0.0));
        let quarter = 0.25 * 2.0 * std::f64::consts::PI / p.omega_g;
        let v = grid_voltage(quarter, &p);
        assert!(v.alpha.abs() < 1e-12 && (v.beta - 163.3).abs() < 1e-12);
        for k in 0..50 {
            let v = grid_voltage(k as f64 * 1.37e-3, &p);
            assert!((v.norm() - 163.3).abs() < 1e-11);
        }
    }

    #[test]
    fn derivative_is_linear() {
        let p = PlantParams::default();
        let s1 = PlantState {
            v_c: AlphaBetaPair::new(1.0, 2.0),
            i_g: AlphaBetaPair::new(-0.5, 0.25),
            i_l: AlphaBetaPair::new(3.0, -1.0),
        };
        let s2 = PlantState {
            v_c: AlphaBetaPair::new(-7.0, 0.5),
            i_g: AlphaBetaPair::new(1.5, 2.0),
            i_l: AlphaBetaPair::new(0.1, 0.2),
        };
        let (u1, g1) = (AlphaBetaPair::new(5.0, 1.0), AlphaBetaPair::new(2.0, -2.0));
        let (u2, g2) = (AlphaBetaPair::new(-1.0, 4.0), AlphaBetaPair::new(0.0, 3.0));
        let k = 2.5;
        let lhs = plant_derivative(&(s1 + s2 * k), u1 + u2 * k, g1 + g2 * k, &p);
        let rhs = plant_derivative(&s1, u1, g1, &p) + plant_derivative(&s2, u2, g2, &p) * k;
        assert!((lhs + rhs * -1.0).max_abs() < 1e-9 * rhs.max_abs());
    }

    #[test]
    fn rejects_non_positive_inductance() {
        let p = PlantParams { l_f: -1e-3, ..Default::default() };
        assert!(matches!(p.validate(), Err(Error::Invalid { ref path, .. }) if path == "l_f"));
    }
}
