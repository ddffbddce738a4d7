//! Declarative experiments: start at an equilibrium, optionally change
//! setpoints, switch modes once, record.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::engine::{command_in_grid_frame, SimState, Simulator};
use super::trace::{Trace, TraceRecord};
use crate::control::instantaneous_power;
use crate::equilibrium::find_equilibrium;
use crate::error::{Error, Result};
use crate::frames::park;
use crate::mapping::{
    apply_flags, gfl_target_state, gfm_target_state, map_gfl_to_gfm, map_gfm_to_gfl, MappingFlags, MappingResult,
    NaiveDefaults,
};
use crate::modes::{ClosedLoop, Command, Mode, Refs};
use crate::plant::{grid_angle, SyncPlant};
use crate::SystemParams;

pub const DEFAULT_DT: f64 = 1e-5;
pub const MAX_DT: f64 = 50e-6;
pub const DEFAULT_DECIMATION: usize = 10;

/// How a setpoint schedule relates to the switch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ordering {
    #[default]
    None,
    /// New setpoints in the source mode, switch once settled.
    SetpointBeforeSwitch,
    /// Switch at the present operating point, then new setpoints in the
    /// target mode.
    SetpointAfterSwitch,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SetpointChange {
    pub t: f64,
    pub refs: Refs,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub initial_mode: Mode,
    /// `None` runs without a switch.
    pub target_mode: Option<Mode>,
    pub t_switch: f64,
    pub duration: f64,
    pub dt: f64,
    pub decimation: usize,
    pub flags: MappingFlags,
    pub initial_refs: Refs,
    /// References the target uses when the mapping's are switched off.
    pub target_refs: Option<Refs>,
    pub schedule: Vec<SetpointChange>,
    pub ordering: Ordering,
    /// Start here instead of at the solved equilibrium of `initial_refs`.
    pub initial_state: Option<ClosedLoop<SyncPlant>>,
}

impl Scenario {
    /// A same-operating-point switch with the default step and decimation.
    pub fn switch(name: impl Into<String>, from: Mode, refs: Refs, flags: MappingFlags, t_switch: f64, duration: f64) -> Self {
        Self {
            name: name.into(),
            initial_mode: from,
            target_mode: Some(from.other()),
            t_switch,
            duration,
            dt: DEFAULT_DT,
            decimation: DEFAULT_DECIMATION,
            flags,
            initial_refs: refs,
            target_refs: None,
            schedule: Vec::new(),
            ordering: Ordering::None,
            initial_state: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let p = |field: &str| format!("scenario.{}.{field}", self.name);
        if !(self.dt > 0.0 && self.dt <= MAX_DT) {
            return Err(Error::invalid(p("dt"), format!("must be in (0, {MAX_DT}] s, got {}", self.dt)));
        }
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return Err(Error::invalid(p("duration"), "must be positive"));
        }
        if !(self.t_switch >= 0.0 && self.t_switch < self.duration) {
            return Err(Error::invalid(p("t_switch"), "must lie in [0, duration)"));
        }
        if self.decimation == 0 {
            return Err(Error::invalid(p("decimation"), "must be at least 1"));
        }
        if self.initial_refs.mode() != self.initial_mode {
            return Err(Error::invalid(p("initial_refs"), format!("must be {} references", self.initial_mode)));
        }
        self.initial_refs.validate().map_err(|e| prefix(e, &p("initial_refs")))?;
        if let Some(target) = self.target_mode {
            if target == self.initial_mode {
                return Err(Error::invalid(p("target_mode"), "must differ from initial_mode"));
            }
            if self.t_switch < self.dt {
                return Err(Error::invalid(p("t_switch"), "a switch needs at least one step before it"));
            }
            if let Some(r) = &self.target_refs {
                if r.mode() != target {
                    return Err(Error::invalid(p("target_refs"), format!("must be {target} references")));
                }
                r.validate().map_err(|e| prefix(e, &p("target_refs")))?;
            }
        } else if self.ordering != Ordering::None {
            return Err(Error::invalid(p("ordering"), "setpoint ordering needs a switch"));
        }
        for (k, c) in self.schedule.iter().enumerate() {
            let path = p(&format!("schedule.{k}"));
            if !(c.t >= 0.0 && c.t < self.duration) {
                return Err(Error::invalid(format!("{path}.t"), "must lie in [0, duration)"));
            }
            c.refs.validate().map_err(|e| prefix(e, &path))?;
            let (mode_ok, time_ok) = match (self.ordering, self.target_mode) {
                (Ordering::SetpointBeforeSwitch, _) => (c.refs.mode() == self.initial_mode, c.t < self.t_switch),
                (Ordering::SetpointAfterSwitch, Some(target)) => (c.refs.mode() == target, c.t > self.t_switch),
                _ => (true, true),
            };
            if !mode_ok {
                return Err(Error::invalid(path, "references are for the wrong mode for this ordering"));
            }
            if !time_ok {
                return Err(Error::invalid(format!("{path}.t"), "time is on the wrong side of the switch"));
            }
        }
        Ok(())
    }

    fn step_of(&self, t: f64) -> u64 {
        (t / self.dt).round() as u64
    }
}

fn prefix(e: Error, path: &str) -> Error {
    match e {
        Error::Invalid { path: inner, reason } => Error::invalid(format!("{path}.{inner}"), reason),
        other => other,
    }
}

/// What happened at the switch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SwitchRecord {
    pub t: f64,
    pub from: Mode,
    pub to: Mode,
    pub flags: MappingFlags,
    /// The complete mapping, before flags were applied.
    pub full: MappingResult,
    pub applied: MappingResult,
    /// Last source command and first target command.
    #[serde(skip)]
    pub cmd_before: Command,
    #[serde(skip)]
    pub cmd_after: Option<Command>,
}

/// Hands control to `target`. Only controller state and references change;
/// the plant is left untouched.
pub fn switch_event(
    state: &SimState,
    target: Mode,
    flags: &MappingFlags,
    naive_refs: Option<Refs>,
    params: &SystemParams,
) -> Result<(SimState, MappingResult, MappingResult)> {
    if target == state.active {
        return Err(Error::invalid("target_mode", format!("{target} is already active")));
    }
    let cmd_prev = state
        .last_cmd
        .ok_or_else(|| Error::invalid("t_switch", "no command has been applied before the switch"))?;
    let meas = state.plant.to_pu(&params.base);
    let cp = &params.control;
    let mut next = *state;
    let (full, applied) = match target {
        Mode::Gfm => {
            let full = map_gfl_to_gfm(&state.gfl, &state.gfm, &meas, cmd_prev.dq, cp);
            let naive = NaiveDefaults {
                theta_raw: state.gfm.droop.theta,
                refs: naive_refs,
            };
            let applied = apply_flags(&full, flags, &naive);
            next.gfm = gfm_target_state(&applied, &state.gfm);
            if let Refs::Gfm(r) = applied.refs {
                next.gfm_refs = r;
            }
            (full, applied)
        }
        Mode::Gfl => {
            let full = map_gfm_to_gfl(&state.gfm, &state.gfl, &meas, cmd_prev.dq, cp);
            let naive = NaiveDefaults {
                theta_raw: state.gfl.pll.theta,
                refs: naive_refs,
            };
            let applied = apply_flags(&full, flags, &naive);
            next.gfl = gfl_target_state(&applied, &state.gfl);
            if let Refs::Gfl(r) = applied.refs {
                next.gfl_refs = r;
            }
            (full, applied)
        }
    };
    next.active = target;
    Ok((next, full, applied))
}

fn set_refs(state: &mut SimState, refs: &Refs) {
    match refs {
        Refs::Gfl(r) => state.gfl_refs = *r,
        Refs::Gfm(r) => state.gfm_refs = *r,
    }
}

/// Runs `sc` to completion. Identical inputs give bit-identical traces. On
/// divergence the error carries the trace recorded so far.
pub fn run_scenario(sc: &Scenario, params: &SystemParams) -> Result<Trace> {
    sc.validate()?;
    params.validate()?;
    let start = match sc.initial_state {
        Some(s) => s,
        None => find_equilibrium(&sc.initial_refs, params)?.state,
    };
    if start.ctrl.mode() != sc.initial_mode {
        return Err(Error::invalid(format!("scenario.{}.initial_state", sc.name), "mode mismatch"));
    }
    let (gfl_refs, gfm_refs) = crate::equilibrium::split_refs(&sc.initial_refs);
    let mut state = SimState::from_sync(&start, gfl_refs, gfm_refs, 0.0, params);
    if let Some(Refs::Gfm(r)) = sc.target_refs {
        state.gfm_refs = r;
    }
    if let Some(Refs::Gfl(r)) = sc.target_refs {
        state.gfl_refs = r;
    }
    let mut sim = Simulator::new(*params, sc.dt, state)?;

    let n_steps = sc.step_of(sc.duration);
    let k_switch = sc.step_of(sc.t_switch);
    let mut schedule: Vec<(u64, Refs)> = sc.schedule.iter().map(|c| (sc.step_of(c.t), c.refs)).collect();
    schedule.sort_by_key(|(k, _)| *k);
    let mut next_change = 0;

    let mut trace = Trace {
        name: sc.name.clone(),
        dt: sc.dt,
        decimation: sc.decimation,
        records: Vec::with_capacity((n_steps as usize) / sc.decimation + 1),
        t_switch: k_switch as f64 * sc.dt,
        switch: None,
        setpoint_times: schedule.iter().map(|(k, _)| *k as f64 * sc.dt).collect(),
    };
    let w_base = params.base.omega_base;

    for k in 0..n_steps {
        while next_change < schedule.len() && schedule[next_change].0 == k {
            set_refs(&mut sim.state, &schedule[next_change].1);
            next_change += 1;
        }
        if let (Some(target), true) = (sc.target_mode, k == k_switch) {
            let (next, full, applied) = switch_event(&sim.state, target, &sc.flags, sc.target_refs, params)?;
            trace.switch = Some(SwitchRecord {
                t: sim.time(),
                from: sim.state.active,
                to: target,
                flags: sc.flags,
                full,
                applied,
                cmd_before: sim.state.last_cmd.expect("checked by switch_event"),
                cmd_after: None,
            });
            sim.state = next;
        }
        let ctrl = sim.state.active_ctrl();
        let sample = match sim.step() {
            Ok(s) => s,
            Err(Error::Diverged { t, detail, .. }) => {
                return Err(Error::Diverged {
                    t,
                    detail,
                    trace_prefix: Some(Box::new(trace)),
                })
            }
            Err(e) => return Err(e),
        };
        if k == k_switch {
            if let Some(sw) = trace.switch.as_mut() {
                sw.cmd_after = Some(sample.cmd);
            }
        }
        if k % sc.decimation as u64 == 0 {
            let th_g = grid_angle(sample.t, &params.plant);
            let m = &sample.meas_pu;
            let sync = SyncPlant {
                v_c: park(m.v_c, th_g),
                i_g: park(m.i_g, th_g),
                i_l: park(m.i_l, th_g),
            };
            let (p, q) = instantaneous_power(sync.v_c, sync.i_g);
            trace.records.push(TraceRecord {
                t: sample.t,
                stationary: *m,
                sync,
                ctrl,
                theta: sample.cmd.theta,
                omega: sample.cmd.omega / w_base,
                p,
                q,
                cmd: command_in_grid_frame(&sample.cmd, sample.t, params),
                mode: ctrl.mode(),
            });
        }
    }
    Ok(trace)
}

/// Runs independent scenarios, optionally in parallel. Output order and
/// content match a serial run.
pub fn run_batch(scenarios: &[Scenario], params: &SystemParams, parallel: bool) -> Vec<Result<Trace>> {
    if parallel {
        scenarios.par_iter().map(|s| run_scenario(s, params)).collect()
    } else {
        scenarios.iter().map(|s| run_scenario(s, params)).collect()
    }
}
