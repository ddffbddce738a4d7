//! State mapping at a mode switch.
//!
//! The target controller is initialized so that, at the switch instant, the
//! physical states and the inverter command stay put and every loop error
//! of the target is zero: its frame is aligned with the source frame, its
//! references are what the plant is already doing, and its integrators are
//! re-initialized so each PI reproduces the output the next loop needs.
//!
//! Mapping is exact at an equilibrium. Anywhere else command continuity still
//! holds but the target does not start on its equilibrium.

use serde::Serialize;

use crate::control::{pi_reinitialize, ControlParams, DroopState, PiState, PllState};
use crate::frames::{wrap_angle, DqPair};
use crate::modes::{FrameMeasurement, GflRefs, GflState, GfmRefs, GfmState, Refs};
use crate::plant::PlantState;

/// Phase injected into the target synchronizer so its angle matches the
/// source angle: `wrap(theta_source - theta_target_raw)`.
pub fn sync_offset(theta_source: f64, theta_target_raw: f64) -> f64 {
    wrap_angle(theta_source - theta_target_raw)
}

/// Which parts of the mapping are applied. `use_sync` is the phase
/// injection, `use_amplitude` the reference and integrator initialization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MappingFlags {
    #[serde(default)]
    pub use_sync: bool,
    #[serde(default)]
    pub use_amplitude: bool,
    #[serde(default)]
    pub use_full_mapping: bool,
}

impl MappingFlags {
    pub const FULL: Self = Self {
        use_sync: true,
        use_amplitude: true,
        use_full_mapping: true,
    };
    pub const NONE: Self = Self {
        use_sync: false,
        use_amplitude: false,
        use_full_mapping: false,
    };
    pub const SYNC_ONLY: Self = Self {
        use_sync: true,
        use_amplitude: false,
        use_full_mapping: false,
    };
    pub const AMPLITUDE_ONLY: Self = Self {
        use_sync: false,
        use_amplitude: true,
        use_full_mapping: false,
    };

    pub fn sync(&self) -> bool {
        self.use_full_mapping || self.use_sync
    }

    pub fn amplitude(&self) -> bool {
        self.use_full_mapping || self.use_amplitude
    }

    /// Short label used in reports and file names.
    pub fn label(&self) -> &'static str {
        match (self.sync(), self.amplitude()) {
            (true, true) => "full",
            (true, false) => "sync_only",
            (false, true) => "amplitude_only",
            (false, false) => "none",
        }
    }
}

/// Integrator initializations of the target controller.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct PiInits {
    pub cur_d: PiState,
    pub cur_q: PiState,
    /// Voltage loop, GFM targets only.
    pub volt: Option<(PiState, PiState)>,
}

impl PiInits {
    /// All-zero initializations of the same shape.
    pub fn zeroed(&self) -> Self {
        Self {
            cur_d: PiState::ZERO,
            cur_q: PiState::ZERO,
            volt: self.volt.map(|_| (PiState::ZERO, PiState::ZERO)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MappingResult {
    /// Injected phase, rad.
    pub theta0: f64,
    /// Target frame angle at the switch: the raw synchronizer angle plus
    /// `theta0`.
    pub theta: f64,
    pub refs: Refs,
    pub pi_inits: PiInits,
}

/// What the target starts from when a part of the mapping is switched off.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NaiveDefaults {
    /// Target synchronizer angle without phase injection.
    pub theta_raw: f64,
    /// Configured target references; when absent the mapped ones are kept.
    pub refs: Option<Refs>,
}

fn current_inits(i_ref: DqPair, i_l: DqPair, cmd_prev: DqPair, cp: &ControlParams) -> (PiState, PiState) {
    // same error expressions as the current loop uses
    let e_d = i_ref.d - i_l.d;
    let e_q = i_ref.q - i_l.q;
    (
        pi_reinitialize(cmd_prev.d, cp.cur.kp, e_d),
        pi_reinitialize(cmd_prev.q, cp.cur.kp, e_q),
    )
}

/// GFL to GFM. `gfm_raw` is the background GFM state (free-running droop
/// angle, filtered power), `meas_pu` the plant at the switch instant and
/// `cmd_prev` the last GFL command in the PLL frame.
pub fn map_gfl_to_gfm(
    gfl: &GflState,
    gfm_raw: &GfmState,
    meas_pu: &PlantState,
    cmd_prev: DqPair,
    cp: &ControlParams,
) -> MappingResult {
    let theta = gfl.pll.theta;
    let theta0 = sync_offset(theta, gfm_raw.droop.theta);
    let m = FrameMeasurement::new(meas_pu, theta);
    let refs = GfmRefs {
        v_ref: m.v_c,
        p_ref: gfm_raw.droop.p_filt,
    };
    let (e_d, e_q) = (refs.v_ref.d - m.v_c.d, refs.v_ref.q - m.v_c.q);
    let volt_d = pi_reinitialize(m.i_l.d, cp.volt.kp, e_d);
    let volt_q = pi_reinitialize(m.i_l.q, cp.volt.kp, e_q);
    // current reference exactly as the voltage loop will produce it
    let i_ref = DqPair::new(cp.volt.kp * e_d + volt_d.accum, cp.volt.kp * e_q + volt_q.accum);
    let (cur_d, cur_q) = current_inits(i_ref, m.i_l, cmd_prev, cp);
    MappingResult {
        theta0,
        theta,
        refs: Refs::Gfm(refs),
        pi_inits: PiInits {
            cur_d,
            cur_q,
            volt: Some((volt_d, volt_q)),
        },
    }
}

/// GFM to GFL. `gfl_raw` is the background PLL state, `cmd_prev` the last
/// GFM command in the droop frame.
pub fn map_gfm_to_gfl(
    gfm: &GfmState,
    gfl_raw: &GflState,
    meas_pu: &PlantState,
    cmd_prev: DqPair,
    cp: &ControlParams,
) -> MappingResult {
    let theta = gfm.droop.theta;
    let theta0 = sync_offset(theta, gfl_raw.pll.theta);
    let m = FrameMeasurement::new(meas_pu, theta);
    let refs = GflRefs { i_ref: m.i_l };
    let (cur_d, cur_q) = current_inits(refs.i_ref, m.i_l, cmd_prev, cp);
    MappingResult {
        theta0,
        theta,
        refs: Refs::Gfl(refs),
        pi_inits: PiInits {
            cur_d,
            cur_q,
            volt: None,
        },
    }
}

/// Keeps the parts of `full` that `flags` enable and takes the rest from
/// `naive`: no phase injection, zero integrators, configured references.
pub fn apply_flags(full: &MappingResult, flags: &MappingFlags, naive: &NaiveDefaults) -> MappingResult {
    let (theta0, theta) = if flags.sync() {
        (full.theta0, full.theta)
    } else {
        (0.0, naive.theta_raw)
    };
    let (refs, pi_inits) = if flags.amplitude() {
        (full.refs, full.pi_inits)
    } else {
        (naive.refs.unwrap_or(full.refs), full.pi_inits.zeroed())
    };
    MappingResult {
        theta0,
        theta,
        refs,
        pi_inits,
    }
}

/// GFM controller state realizing `m`. The power filter carries over from
/// the background state.
pub fn gfm_target_state(m: &MappingResult, background: &GfmState) -> GfmState {
    let (volt_d, volt_q) = m.pi_inits.volt.unwrap_or_default();
    GfmState {
        droop: DroopState {
            theta: m.theta,
            p_filt: background.droop.p_filt,
        },
        volt_d,
        volt_q,
        cur_d: m.pi_inits.cur_d,
        cur_q: m.pi_inits.cur_q,
    }
}

/// GFL controller state realizing `m`. The PLL integrator carries over from
/// the background state.
pub fn gfl_target_state(m: &MappingResult, background: &GflState) -> GflState {
    GflState {
        pll: PllState {
            theta: m.theta,
            integ: background.pll.integ,
        },
        cur_d: m.pi_inits.cur_d,
        cur_q: m.pi_inits.cur_q,
    }
}
