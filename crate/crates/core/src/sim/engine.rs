//! Fixed-step closed-loop stepping.
//!
//! Each step: the plant is sampled at `t_k`, the active controller produces
//! a [`Command`] (the inactive one keeps tracking in the background), then
//! the plant is advanced over `[t_k, t_k + dt]` with classic RK4. The command
//! dq vector is held constant while its frame keeps rotating at the
//! controller's frequency, so a controller in steady state drives the plant
//! with an exact sinusoid.

use crate::control::{PllState, DroopState};
use crate::error::{Error, Result};
use crate::frames::{wrap_angle, DqPair};
use crate::modes::{
    gfl_step, gfl_track, gfm_step, gfm_track, ClosedLoop, Command, GflRefs, GflState, GfmRefs, GfmState, Mode,
    ModeState,
};
use crate::plant::{grid_angle, grid_voltage, plant_derivative, PlantState, SyncPlant};
use crate::SystemParams;

/// Any plant state above this (pu) aborts the run.
pub const DIVERGENCE_LIMIT_PU: f64 = 100.0;

/// Complete simulator state. Both controllers are always present; only
/// `active` drives the inverter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimState {
    /// Filter states, SI, stationary frame.
    pub plant: PlantState,
    pub gfl: GflState,
    pub gfm: GfmState,
    pub active: Mode,
    pub gfl_refs: GflRefs,
    pub gfm_refs: GfmRefs,
    /// Command applied during the previous step.
    pub last_cmd: Option<Command>,
}

impl SimState {
    pub fn active_ctrl(&self) -> ModeState {
        match self.active {
            Mode::Gfl => ModeState::Gfl(self.gfl),
            Mode::Gfm => ModeState::Gfm(self.gfm),
        }
    }

    /// Active controller plus plant in the grid-synchronous frame at time
    /// `t`; controller angles become offsets from the grid angle.
    pub fn to_sync(&self, t: f64, params: &SystemParams) -> ClosedLoop<SyncPlant> {
        let plant = SyncPlant::from_stationary(&self.plant, t, &params.base, &params.plant);
        let th_g = grid_angle(t, &params.plant);
        let ctrl = match self.active_ctrl() {
            ModeState::Gfl(mut s) => {
                s.pll.theta = wrap_angle(s.pll.theta - th_g);
                ModeState::Gfl(s)
            }
            ModeState::Gfm(mut s) => {
                s.droop.theta = wrap_angle(s.droop.theta - th_g);
                ModeState::Gfm(s)
            }
        };
        ClosedLoop { plant, ctrl }
    }

    /// Builds a simulator state at time `t` from a synchronous-frame closed
    /// loop. The inactive controller is put into its own tracking steady
    /// state: an inactive PLL locked on the capacitor voltage, or an inactive
    /// droop whose angle runs with the grid and whose filter holds the
    /// present power.
    pub fn from_sync(x: &ClosedLoop<SyncPlant>, refs_gfl: GflRefs, refs_gfm: GfmRefs, t: f64, params: &SystemParams) -> Self {
        let th_g = grid_angle(t, &params.plant);
        let plant = x.plant.to_stationary(t, &params.base, &params.plant);
        let cp = &params.control;
        let mut gfl = GflState {
            pll: PllState {
                theta: wrap_angle(x.plant.v_c.angle() + th_g),
                integ: params.plant.omega_g - cp.omega_ref,
            },
            ..Default::default()
        };
        let mut gfm = GfmState {
            droop: DroopState {
                theta: wrap_angle(th_g),
                p_filt: x.plant.v_c.dot(&x.plant.i_g),
            },
            ..Default::default()
        };
        let active = match x.ctrl {
            ModeState::Gfl(mut s) => {
                s.pll.theta = wrap_angle(s.pll.theta + th_g);
                gfl = s;
                Mode::Gfl
            }
            ModeState::Gfm(mut s) => {
                s.droop.theta = wrap_angle(s.droop.theta + th_g);
                gfm = s;
                Mode::Gfm
            }
        };
        Self {
            plant,
            gfl,
            gfm,
            active,
            gfl_refs: refs_gfl,
            gfm_refs: refs_gfm,
            last_cmd: None,
        }
    }
}

/// What happened during one step, sampled at the start of the step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSample {
    pub t: f64,
    /// Plant at `t`, pu, stationary frame.
    pub meas_pu: PlantState,
    pub cmd: Command,
}

#[derive(Debug, Clone)]
pub struct Simulator {
    pub params: SystemParams,
    pub dt: f64,
    step_index: u64,
    pub state: SimState,
}

impl Simulator {
    pub fn new(params: SystemParams, dt: f64, state: SimState) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::invalid("dt", format!("must be > 0, got {dt}")));
        }
        Ok(Self {
            params,
            dt,
            step_index: 0,
            state,
        })
    }

    pub fn step_index(&self) -> u64 {
        self.step_index
    }

    /// Time of the next sample. Computed from the step count so it never
    /// accumulates rounding.
    pub fn time(&self) -> f64 {
        self.step_index as f64 * self.dt
    }

    pub fn sync_state(&self) -> ClosedLoop<SyncPlant> {
        self.state.to_sync(self.time(), &self.params)
    }

    /// Plant at the current instant, pu, stationary frame.
    pub fn measurement(&self) -> PlantState {
        self.state.plant.to_pu(&self.params.base)
    }

    pub fn step(&mut self) -> Result<StepSample> {
        let t = self.time();
        let dt = self.dt;
        let cp = self.params.control;
        let meas_pu = self.measurement();
        let st = &mut self.state;
        let cmd = match st.active {
            Mode::Gfl => {
                let (cmd, gfl) = gfl_step(&st.gfl, &meas_pu, &st.gfl_refs, &cp, dt);
                st.gfm = gfm_track(&st.gfm, &meas_pu, &cp, dt);
                st.gfl = gfl;
                cmd
            }
            Mode::Gfm => {
                let (cmd, gfm) = gfm_step(&st.gfm, &meas_pu, &st.gfm_refs, &cp, dt);
                st.gfl = gfl_track(&st.gfl, &meas_pu, &cp, dt);
                st.gfm = gfm;
                cmd
            }
        };
        st.plant = rk4_plant(&st.plant, &cmd, t, dt, &self.params);
        st.last_cmd = Some(cmd);
        self.step_index += 1;

        let peak = st.plant.to_pu(&self.params.base).max_abs();
        if !peak.is_finite() || peak > DIVERGENCE_LIMIT_PU {
            return Err(Error::Diverged {
                t: self.time(),
                detail: format!("plant state reached {peak:.3e} pu"),
                trace_prefix: None,
            });
        }
        Ok(StepSample { t, meas_pu, cmd })
    }
}

/// One RK4 step of the filter under a rotating held command.
pub fn rk4_plant(x: &PlantState, cmd: &Command, t: f64, h: f64, params: &SystemParams) -> PlantState {
    let v_base = params.base.v_base;
    let p = &params.plant;
    let f = |tau: f64, s: &PlantState| {
        let v_i = cmd.alpha_beta_at(tau).scale(v_base);
        plant_derivative(s, v_i, grid_voltage(t + tau, p), p)
    };
    let k1 = f(0.0, x);
    let k2 = f(0.5 * h, &(*x + k1 * (0.5 * h)));
    let k3 = f(0.5 * h, &(*x + k2 * (0.5 * h)));
    let k4 = f(h, &(*x + k3 * h));
    *x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

/// Largest per-component difference between two synchronous-frame closed
/// loops of the same mode, angles compared modulo 2π.
pub fn sync_distance(a: &ClosedLoop<SyncPlant>, b: &ClosedLoop<SyncPlant>) -> f64 {
    let pa = a.plant.components();
    let pb = b.plant.components();
    let mut m = pa.iter().zip(pb.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let ang = |x: f64, y: f64| wrap_angle(x - y).abs();
    let pi = |x: crate::control::PiState, y: crate::control::PiState| (x.accum - y.accum).abs();
    let c = match (a.ctrl, b.ctrl) {
        (ModeState::Gfl(x), ModeState::Gfl(y)) => [
            ang(x.pll.theta, y.pll.theta),
            (x.pll.integ - y.pll.integ).abs(),
            pi(x.cur_d, y.cur_d),
            pi(x.cur_q, y.cur_q),
        ]
        .into_iter()
        .fold(0.0, f64::max),
        (ModeState::Gfm(x), ModeState::Gfm(y)) => [
            ang(x.droop.theta, y.droop.theta),
            (x.droop.p_filt - y.droop.p_filt).abs(),
            pi(x.volt_d, y.volt_d),
            pi(x.volt_q, y.volt_q),
            pi(x.cur_d, y.cur_d),
            pi(x.cur_q, y.cur_q),
        ]
        .into_iter()
        .fold(0.0, f64::max),
        _ => f64::INFINITY,
    };
    m = m.max(c);
    m
}

/// The dq command expressed in the grid-synchronous frame at the step time.
pub fn command_in_grid_frame(cmd: &Command, t: f64, params: &SystemParams) -> DqPair {
    cmd.dq.rotate(cmd.theta - grid_angle(t, &params.plant))
}
