use std::io::Write;

use crate::frames::DqPair;
use crate::modes::{Mode, ModeState};
use crate::plant::{PlantState, SyncPlant};

use super::SwitchRecord;

pub const CSV_HEADER: &str =
    "t,v_ca,v_cb,i_ga,i_gb,i_la,i_lb,v_cd,v_cq,i_gd,i_gq,i_ld,i_lq,theta,omega,p,q,vi_d_cmd,vi_q_cmd,mode";

/// One sample, taken at the start of a step. Everything is pu; dq values are
/// in the grid-synchronous frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub t: f64,
    pub stationary: PlantState,
    pub sync: SyncPlant,
    /// Active controller state before the step.
    pub ctrl: ModeState,
    /// Active controller frame angle, rad.
    pub theta: f64,
    /// Active controller frequency, pu.
    pub omega: f64,
    pub p: f64,
    pub q: f64,
    /// Inverter voltage command in the grid frame.
    pub cmd: DqPair,
    pub mode: Mode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub name: String,
    pub dt: f64,
    pub decimation: usize,
    pub records: Vec<TraceRecord>,
    /// Nominal switch time; the metrics reference even when no switch runs.
    pub t_switch: f64,
    pub switch: Option<SwitchRecord>,
    /// Setpoint change times, s.
    pub setpoint_times: Vec<f64>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn sample_spacing(&self) -> f64 {
        self.dt * self.decimation as f64
    }

    /// The fixed-header CSV. `mode` is 0 for GFL and 1 for GFM.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{CSV_HEADER}")?;
        for r in &self.records {
            let s = &r.stationary;
            let y = &r.sync;
            let mode = match r.mode {
                Mode::Gfl => 0,
                Mode::Gfm => 1,
            };
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.t,
                s.v_c.alpha,
                s.v_c.beta,
                s.i_g.alpha,
                s.i_g.beta,
                s.i_l.alpha,
                s.i_l.beta,
                y.v_c.d,
                y.v_c.q,
                y.i_g.d,
                y.i_g.q,
                y.i_l.d,
                y.i_l.q,
                r.theta,
                r.omega,
                r.p,
                r.q,
                r.cmd.d,
                r.cmd.q,
                mode
            )?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("csv is ascii")
    }
}
