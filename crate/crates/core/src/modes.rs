//! Grid-following and grid-forming controllers and the unified
//! `[x_c1, x_c2, x_phy]` view of the closed loop.
//!
//! Controllers work in per-unit on measurements rotated into their own frame.
//! GFL: SRF-PLL on the capacitor voltage, PI on the inverter-side current.
//! GFM: P-ω droop on the capacitor power, PI on the capacitor voltage
//! producing the current reference, then the same current PI.
//!
//! The current PI pair is the state both modes share.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::control::{
    droop_step, instantaneous_power, pi_step, pll_step, ControlParams, DroopState, PiGains, PiState, PllState,
};
use crate::error::{Error, Result};
use crate::frames::{inverse_park, park, wrap_angle, AlphaBetaPair, DqPair};
use crate::plant::PlantState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Gfl,
    Gfm,
}

impl Mode {
    pub fn other(self) -> Self {
        match self {
            Mode::Gfl => Mode::Gfm,
            Mode::Gfm => Mode::Gfl,
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Gfl => "GFL",
            Mode::Gfm => "GFM",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gfl" => Ok(Mode::Gfl),
            "gfm" => Ok(Mode::Gfm),
            other => Err(Error::invalid("mode", format!("expected gfl or gfm, got `{other}`"))),
        }
    }
}

/// GFL setpoint: inverter-side current reference in the PLL frame, pu.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GflRefs {
    pub i_ref: DqPair,
}

/// GFM setpoints: capacitor voltage reference in the droop frame and active
/// power reference, pu.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GfmRefs {
    pub v_ref: DqPair,
    pub p_ref: f64,
}

pub const CURRENT_REF_LIMIT: f64 = 2.0;
pub const VOLTAGE_REF_BAND: (f64, f64) = (0.5, 1.5);

impl GflRefs {
    pub fn validate(&self) -> Result<()> {
        if !self.i_ref.is_finite() || self.i_ref.norm() > CURRENT_REF_LIMIT {
            return Err(Error::invalid("i_ref", format!("magnitude must be <= {CURRENT_REF_LIMIT} pu")));
        }
        Ok(())
    }
}

impl GfmRefs {
    pub fn validate(&self) -> Result<()> {
        let m = self.v_ref.norm();
        if !self.v_ref.is_finite() || m < VOLTAGE_REF_BAND.0 || m > VOLTAGE_REF_BAND.1 {
            return Err(Error::invalid(
                "v_ref",
                format!("magnitude {m} outside [{}, {}] pu", VOLTAGE_REF_BAND.0, VOLTAGE_REF_BAND.1),
            ));
        }
        if !self.p_ref.is_finite() {
            return Err(Error::invalid("p_ref", "must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Refs {
    Gfl(GflRefs),
    Gfm(GfmRefs),
}

impl Refs {
    pub fn mode(&self) -> Mode {
        match self {
            Refs::Gfl(_) => Mode::Gfl,
            Refs::Gfm(_) => Mode::Gfm,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Refs::Gfl(r) => r.validate(),
            Refs::Gfm(r) => r.validate(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GflState {
    pub pll: PllState,
    pub cur_d: PiState,
    pub cur_q: PiState,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GfmState {
    pub droop: DroopState,
    pub volt_d: PiState,
    pub volt_q: PiState,
    pub cur_d: PiState,
    pub cur_q: PiState,
}

/// Inverter voltage command: a dq vector held in a frame that keeps rotating
/// at `omega` from angle `theta` until the next control update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Command {
    pub dq: DqPair,
    pub theta: f64,
    pub omega: f64,
}

impl Command {
    /// Stationary-frame command `tau` seconds after the update.
    pub fn alpha_beta_at(&self, tau: f64) -> AlphaBetaPair {
        inverse_park(self.dq, self.theta + self.omega * tau)
    }

    pub fn alpha_beta(&self) -> AlphaBetaPair {
        self.alpha_beta_at(0.0)
    }
}

/// Plant measurement (pu) rotated into a controller frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameMeasurement {
    pub v_c: DqPair,
    pub i_g: DqPair,
    pub i_l: DqPair,
}

impl FrameMeasurement {
    pub fn new(meas_pu: &PlantState, theta: f64) -> Self {
        Self {
            v_c: park(meas_pu.v_c, theta),
            i_g: park(meas_pu.i_g, theta),
            i_l: park(meas_pu.i_l, theta),
        }
    }

    /// Active and reactive power at the capacitor, grid-side current.
    pub fn power(&self) -> (f64, f64) {
        instantaneous_power(self.v_c, self.i_g)
    }
}

/// Current PI pair; returns the dq voltage command.
pub fn current_loop(
    cur_d: PiState,
    cur_q: PiState,
    i_ref: DqPair,
    i_l: DqPair,
    g: &PiGains,
    dt: f64,
) -> (DqPair, PiState, PiState) {
    let (vd, cur_d) = pi_step(cur_d, i_ref.d - i_l.d, g, dt);
    let (vq, cur_q) = pi_step(cur_q, i_ref.q - i_l.q, g, dt);
    (DqPair::new(vd, vq), cur_d, cur_q)
}

pub fn gfl_step(st: &GflState, meas_pu: &PlantState, refs: &GflRefs, cp: &ControlParams, dt: f64) -> (Command, GflState) {
    let m = FrameMeasurement::new(meas_pu, st.pll.theta);
    let (sync, pll) = pll_step(st.pll, m.v_c.q, &cp.pll, cp.omega_ref, dt);
    let (dq, cur_d, cur_q) = current_loop(st.cur_d, st.cur_q, refs.i_ref, m.i_l, &cp.cur, dt);
    let cmd = Command {
        dq,
        theta: sync.theta,
        omega: sync.omega,
    };
    (cmd, GflState { pll, cur_d, cur_q })
}

pub fn gfm_step(st: &GfmState, meas_pu: &PlantState, refs: &GfmRefs, cp: &ControlParams, dt: f64) -> (Command, GfmState) {
    let m = FrameMeasurement::new(meas_pu, st.droop.theta);
    let (p, _) = m.power();
    let (sync, droop) = droop_step(st.droop, p, refs.p_ref, &cp.droop, cp.omega_ref, dt);
    let (id_ref, volt_d) = pi_step(st.volt_d, refs.v_ref.d - m.v_c.d, &cp.volt, dt);
    let (iq_ref, volt_q) = pi_step(st.volt_q, refs.v_ref.q - m.v_c.q, &cp.volt, dt);
    let (dq, cur_d, cur_q) = current_loop(st.cur_d, st.cur_q, DqPair::new(id_ref, iq_ref), m.i_l, &cp.cur, dt);
    let cmd = Command {
        dq,
        theta: sync.theta,
        omega: sync.omega,
    };
    (
        cmd,
        GfmState {
            droop,
            volt_d,
            volt_q,
            cur_d,
            cur_q,
        },
    )
}

/// Advances an inactive GFL controller: the PLL keeps tracking the
/// capacitor voltage, the current PI is frozen.
pub fn gfl_track(st: &GflState, meas_pu: &PlantState, cp: &ControlParams, dt: f64) -> GflState {
    let v_q = park(meas_pu.v_c, st.pll.theta).q;
    let (_, pll) = pll_step(st.pll, v_q, &cp.pll, cp.omega_ref, dt);
    GflState { pll, ..*st }
}

/// Advances an inactive GFM controller: the power filter keeps filtering,
/// the droop angle free-runs at the nominal frequency, the PIs are frozen.
pub fn gfm_track(st: &GfmState, meas_pu: &PlantState, cp: &ControlParams, dt: f64) -> GfmState {
    let (p, _) = FrameMeasurement::new(meas_pu, st.droop.theta).power();
    let droop = DroopState {
        theta: wrap_angle(st.droop.theta + cp.omega_ref * dt),
        p_filt: st.droop.p_filt + cp.droop.lpf_cutoff * dt * (p - st.droop.p_filt),
    };
    GfmState { droop, ..*st }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ModeState {
    Gfl(GflState),
    Gfm(GfmState),
}

impl ModeState {
    pub fn mode(&self) -> Mode {
        match self {
            ModeState::Gfl(_) => Mode::Gfl,
            ModeState::Gfm(_) => Mode::Gfm,
        }
    }

    pub fn theta(&self) -> f64 {
        match self {
            ModeState::Gfl(s) => s.pll.theta,
            ModeState::Gfm(s) => s.droop.theta,
        }
    }
}

/// Plant plus the active controller. `P` is the plant representation:
/// [`PlantState`] in the simulator, the synchronous-frame state in the
/// equilibrium analysis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosedLoop<P> {
    pub plant: P,
    pub ctrl: ModeState,
}

/// Controller states that exist in one mode only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum IndependentState {
    Gfl { pll: PllState },
    Gfm { droop: DroopState, volt_d: PiState, volt_q: PiState },
}

/// The current-loop integrators common to both modes.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CommonState {
    pub cur_d: PiState,
    pub cur_q: PiState,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnifiedState<P> {
    pub x_c1: IndependentState,
    pub x_c2: CommonState,
    pub x_phy: P,
}

impl<P> UnifiedState<P> {
    pub fn mode(&self) -> Mode {
        match self.x_c1 {
            IndependentState::Gfl { .. } => Mode::Gfl,
            IndependentState::Gfm { .. } => Mode::Gfm,
        }
    }
}

pub fn partition<P: Copy>(state: &ClosedLoop<P>) -> UnifiedState<P> {
    let (x_c1, x_c2) = match state.ctrl {
        ModeState::Gfl(s) => (
            IndependentState::Gfl { pll: s.pll },
            CommonState {
                cur_d: s.cur_d,
                cur_q: s.cur_q,
            },
        ),
        ModeState::Gfm(s) => (
            IndependentState::Gfm {
                droop: s.droop,
                volt_d: s.volt_d,
                volt_q: s.volt_q,
            },
            CommonState {
                cur_d: s.cur_d,
                cur_q: s.cur_q,
            },
        ),
    };
    UnifiedState {
        x_c1,
        x_c2,
        x_phy: state.plant,
    }
}

pub fn assemble<P: Copy>(u: &UnifiedState<P>) -> ClosedLoop<P> {
    let CommonState { cur_d, cur_q } = u.x_c2;
    let ctrl = match u.x_c1 {
        IndependentState::Gfl { pll } => ModeState::Gfl(GflState { pll, cur_d, cur_q }),
        IndependentState::Gfm { droop, volt_d, volt_q } => ModeState::Gfm(GfmState {
            droop,
            volt_d,
            volt_q,
            cur_d,
            cur_q,
        }),
    };
    ClosedLoop { plant: u.x_phy, ctrl }
}
