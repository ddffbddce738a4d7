//! Flat state-vector layout used by the Newton solver and the Jacobian.

use crate::control::{DroopState, PiState, PllState};
use crate::modes::{ClosedLoop, GflState, GfmState, Mode, ModeState};
use crate::plant::SyncPlant;

const GFL_NAMES: [&str; 10] = ["v_cd", "v_cq", "i_gd", "i_gq", "i_ld", "i_lq", "delta", "pll_integ", "cur_d", "cur_q"];
const GFM_NAMES: [&str; 12] = [
    "v_cd", "v_cq", "i_gd", "i_gq", "i_ld", "i_lq", "delta", "p_filt", "volt_d", "volt_q", "cur_d", "cur_q",
];

pub fn component_names(mode: Mode) -> &'static [&'static str] {
    match mode {
        Mode::Gfl => &GFL_NAMES,
        Mode::Gfm => &GFM_NAMES,
    }
}

/// Plant rows first, then δ, then the controller integrators.
pub fn to_vector(x: &ClosedLoop<SyncPlant>) -> Vec<f64> {
    let mut v = x.plant.components().to_vec();
    match x.ctrl {
        ModeState::Gfl(s) => v.extend([s.pll.theta, s.pll.integ, s.cur_d.accum, s.cur_q.accum]),
        ModeState::Gfm(s) => v.extend([
            s.droop.theta,
            s.droop.p_filt,
            s.volt_d.accum,
            s.volt_q.accum,
            s.cur_d.accum,
            s.cur_q.accum,
        ]),
    }
    v
}

/// Inverse of [`to_vector`]. Panics if `v` is shorter than the mode's layout.
pub fn from_vector(mode: Mode, v: &[f64]) -> ClosedLoop<SyncPlant> {
    assert!(v.len() >= component_names(mode).len(), "state vector too short for {mode}");
    let plant = SyncPlant::from_components(&v[..6]);
    let ctrl = match mode {
        Mode::Gfl => ModeState::Gfl(GflState {
            pll: PllState { theta: v[6], integ: v[7] },
            cur_d: PiState::new(v[8]),
            cur_q: PiState::new(v[9]),
        }),
        Mode::Gfm => ModeState::Gfm(GfmState {
            droop: DroopState { theta: v[6], p_filt: v[7] },
            volt_d: PiState::new(v[8]),
            volt_q: PiState::new(v[9]),
            cur_d: PiState::new(v[10]),
            cur_q: PiState::new(v[11]),
        }),
    };
    ClosedLoop { plant, ctrl }
}
