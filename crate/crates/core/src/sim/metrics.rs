//! Post-switch transient severity.

use serde::Serialize;

use super::trace::{Trace, TraceRecord};
use crate::error::{Error, Result};

/// Signals measured, in report order. Vector signals use the grid-frame dq
/// pair and their deviation is the vector distance.
pub const SIGNALS: [&str; 6] = ["v_c", "i_g", "i_l", "p", "q", "omega"];
/// Length of the pre-switch averaging window, s.
pub const PRE_SWITCH_WINDOW: f64 = 0.01;
/// Settling band, relative to the pre-switch magnitude (at least 1 pu).
pub const SETTLING_BAND: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct SignalMetrics {
    /// Largest distance from the pre-switch mean, pu.
    pub max_deviation: f64,
    /// Time after the switch at which the signal last leaves the settling
    /// band around its final value, s.
    pub settling_time: f64,
    pub overshoot: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransientMetrics {
    pub t_switch: f64,
    /// Observation window actually used, s.
    pub window: f64,
    pub signals: Vec<(&'static str, SignalMetrics)>,
}

impl TransientMetrics {
    pub fn get(&self, name: &str) -> Option<&SignalMetrics> {
        self.signals.iter().find(|(n, _)| *n == name).map(|(_, m)| m)
    }

    /// Largest deviation among `names`.
    pub fn max_deviation_of(&self, names: &[&str]) -> f64 {
        names
            .iter()
            .filter_map(|n| self.get(n))
            .map(|m| m.max_deviation)
            .fold(0.0, f64::max)
    }

    /// Largest deviation of the physical states.
    pub fn max_plant_deviation(&self) -> f64 {
        self.max_deviation_of(&["v_c", "i_g", "i_l"])
    }
}

fn signal(r: &TraceRecord, name: &str) -> [f64; 2] {
    match name {
        "v_c" => [r.sync.v_c.d, r.sync.v_c.q],
        "i_g" => [r.sync.i_g.d, r.sync.i_g.q],
        "i_l" => [r.sync.i_l.d, r.sync.i_l.q],
        "p" => [r.p, 0.0],
        "q" => [r.q, 0.0],
        "omega" => [r.omega, 0.0],
        _ => unreachable!("unknown signal {name}"),
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn signal_metrics(pre: &[TraceRecord], post: &[TraceRecord], name: &str, t_switch: f64) -> SignalMetrics {
    let ref_records = if pre.is_empty() { &post[..1] } else { pre };
    // mean taken relative to the first sample so a constant signal is exact
    let first = signal(&ref_records[0], name);
    let mut acc = [0.0; 2];
    for r in ref_records {
        let s = signal(r, name);
        acc[0] += s[0] - first[0];
        acc[1] += s[1] - first[1];
    }
    let n = ref_records.len() as f64;
    let mean = [first[0] + acc[0] / n, first[1] + acc[1] / n];
    let scale = mean[0].hypot(mean[1]).max(1.0);
    let band = SETTLING_BAND * scale;

    let values: Vec<[f64; 2]> = post.iter().map(|r| signal(r, name)).collect();
    let fin = *values.last().expect("post window is not empty");
    let max_deviation = values.iter().map(|v| dist(*v, mean)).fold(0.0, f64::max);

    let mut settling_time = 0.0;
    for i in (0..values.len()).rev() {
        let e = dist(values[i], fin) - band;
        if e > 0.0 {
            // interpolate the band crossing towards the next sample
            let t = match values.get(i + 1) {
                Some(next) => {
                    let e_next = dist(*next, fin) - band;
                    let (t0, t1) = (post[i].t, post[i + 1].t);
                    t0 + (t1 - t0) * e / (e - e_next)
                }
                None => post[i].t,
            };
            settling_time = t - t_switch;
            break;
        }
    }
    settling_time = settling_time.max(0.0);

    let step = dist(fin, mean);
    let overshoot = if step > band {
        let u = [(fin[0] - mean[0]) / step, (fin[1] - mean[1]) / step];
        values
            .iter()
            .map(|v| (v[0] - fin[0]) * u[0] + (v[1] - fin[1]) * u[1])
            .fold(0.0, f64::max)
            / step
    } else {
        max_deviation / scale
    };
    SignalMetrics {
        max_deviation,
        settling_time,
        overshoot,
    }
}

/// Metrics over `[t_switch, t_switch + window]`, against the mean of the
/// preceding 10 ms.
pub fn transient_metrics(tr: &Trace, t_switch: f64, window: f64) -> Result<TransientMetrics> {
    transient_metrics_until(tr, t_switch, t_switch + window)
}

fn transient_metrics_until(tr: &Trace, t_switch: f64, t_end: f64) -> Result<TransientMetrics> {
    if t_end.is_nan() || t_end <= t_switch {
        return Err(Error::invalid("window", "must be positive"));
    }
    // half-sample slack so a switch on a sample boundary counts as post
    let eps = 0.5 * tr.dt;
    let pre: Vec<TraceRecord> = tr
        .records
        .iter()
        .filter(|r| r.t < t_switch - eps && r.t >= t_switch - PRE_SWITCH_WINDOW - eps)
        .copied()
        .collect();
    let post: Vec<TraceRecord> = tr
        .records
        .iter()
        .filter(|r| r.t >= t_switch - eps && r.t <= t_end + eps)
        .copied()
        .collect();
    if post.is_empty() {
        return Err(Error::invalid("t_switch", format!("no samples after t = {t_switch} s in trace `{}`", tr.name)));
    }
    let window = post.last().map(|r| r.t).unwrap_or(t_switch) - t_switch;
    let signals = SIGNALS
        .iter()
        .map(|&n| (n, signal_metrics(&pre, &post, n, t_switch)))
        .collect();
    Ok(TransientMetrics {
        t_switch,
        window,
        signals,
    })
}

/// Metrics for a recorded scenario: the window starts at the switch and is
/// cut short at the next setpoint change.
pub fn scenario_metrics(tr: &Trace, window: f64) -> Result<TransientMetrics> {
    let t0 = tr.t_switch;
    let mut t_end = t0 + window;
    if let Some(&t_next) = tr.setpoint_times.iter().find(|&&t| t > t0) {
        // stop one sample short of the change
        t_end = t_end.min(t_next - tr.dt);
    }
    transient_metrics_until(tr, t0, t_end)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frames::DqPair;
    use crate::modes::{GflState, Mode, ModeState};
    use crate::plant::{PlantState, SyncPlant};

    fn synthetic(f: impl Fn(f64) -> f64, t_end: f64, dt: f64) -> Trace {
        let n = (t_end / dt).round() as usize;
        let records = (0..n)
            .map(|k| {
                let t = k as f64 * dt;
                TraceRecord {
                    t,
                    stationary: PlantState::default(),
                    sync: SyncPlant {
                        v_c: DqPair::new(f(t), 0.0),
                        ..Default::default()
                    },
                    ctrl: ModeState::Gfl(GflState::default()),
                    theta: 0.0,
                    omega: 1.0,
                    p: 0.0,
                    q: 0.0,
                    cmd: DqPair::ZERO,
                    mode: Mode::Gfl,
                }
            })
            .collect();
        Trace {
            name: "synthetic".into(),
            dt,
            decimation: 1,
            records,
            t_switch: 0.1,
            switch: None,
            setpoint_times: vec![],
        }
    }

    #[test]
    fn constant_trace_is_all_zero() {
        let tr = synthetic(|_| 0.7, 0.5, 1e-4);
        let m = transient_metrics(&tr, 0.1, 0.2).unwrap();
        for (_, s) in &m.signals {
            assert_eq!(*s, SignalMetrics::default());
        }
    }

    #[test]
    fn decaying_step_matches_closed_form() {
        let (tau, amp, ts) = (0.02, 0.2, 0.1);
        let tr = synthetic(|t| if t < ts { 0.0 } else { amp * (-(t - ts) / tau).exp() }, 0.5, 1e-5);
        let m = transient_metrics(&tr, ts, 0.2).unwrap();
        let v = m.get("v_c").unwrap();
        assert!((v.max_deviation - amp).abs() < 1e-12);
        // band is 0.01 around a final value of amp·e^-10
        let fin = amp * (-10.0f64).exp();
        let expect = -tau * ((0.01 + fin) / amp).ln();
        assert!((v.settling_time - expect).abs() < 1e-6, "{} vs {expect}", v.settling_time);
        assert!((v.overshoot - amp).abs() < 1e-12);
    }

    #[test]
    fn step_change_overshoot_ratio() {
        // underdamped 1 → 1.5; peak of -e^(-100x)·cos(200x) over x
        let tr = synthetic(
            |t| {
                let x = (t - 0.1).max(0.0);
                1.5 - 0.5 * (-x / 0.01).exp() * (x * 200.0).cos()
            },
            0.6,
            1e-5,
        );
        let m = transient_metrics(&tr, 0.1, 0.4).unwrap();
        let v = m.get("v_c").unwrap();
        let peak = (0..20000)
            .map(|k| {
                let x = k as f64 * 1e-6;
                -(-100.0 * x).exp() * (200.0 * x).cos()
            })
            .fold(0.0, f64::max);
        assert!((v.overshoot - peak).abs() < 1e-3, "{} vs {peak}", v.overshoot);
        assert!((v.max_deviation - 0.5 * (1.0 + peak)).abs() < 1e-3);
    }

    #[test]
    fn window_stops_before_next_setpoint() {
        let mut tr = synthetic(|t| if t < 0.3 { 1.0 } else { 2.0 }, 0.6, 1e-4);
        tr.setpoint_times = vec![0.05, 0.3];
        let m = scenario_metrics(&tr, 0.2).unwrap();
        assert_eq!(m.max_plant_deviation(), 0.0);
        assert!(m.window <= 0.2 + 1e-9);
    }
}
