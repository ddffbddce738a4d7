//! Control primitives: a re-initializable PI, the SRF-PLL, P-ω droop with a
//! first-order power filter, and instantaneous power.
//!
//! Every primitive is a plain value advanced by a pure step function. All
//! integrators use forward Euler: the output of a step is computed from the
//! state *before* the update, which makes [`pi_reinitialize`] exactly
//! bumpless.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frames::{wrap_angle, DqPair};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PiGains {
    pub kp: f64,
    pub ki: f64,
}

impl PiGains {
    pub const fn new(kp: f64, ki: f64) -> Self {
        Self { kp, ki }
    }

    pub fn validate(&self, path: &str) -> Result<()> {
        if !(self.kp.is_finite() && self.ki.is_finite()) || self.kp < 0.0 || self.ki < 0.0 {
            return Err(Error::invalid(path, "gains must be finite and non-negative"));
        }
        if self.kp == 0.0 && self.ki == 0.0 {
            return Err(Error::invalid(path, "kp and ki cannot both be zero"));
        }
        Ok(())
    }
}

/// Integrator of a PI controller. `accum` already contains the initial value
/// `x_0`, so the output is `kp * error + accum`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PiState {
    pub accum: f64,
}

impl PiState {
    pub const ZERO: Self = Self { accum: 0.0 };

    pub const fn new(accum: f64) -> Self {
        Self { accum }
    }
}

pub fn pi_step(st: PiState, error: f64, g: &PiGains, dt: f64) -> (f64, PiState) {
    let output = g.kp * error + st.accum;
    (output, PiState::new(st.accum + g.ki * error * dt))
}

/// Loads the integrator so that the next output, at `error_now`, equals
/// `y_prev`: `x_0 = y - kp * error`.
pub fn pi_reinitialize(y_prev: f64, kp: f64, error_now: f64) -> PiState {
    PiState::new(y_prev - kp * error_now)
}

/// Output of a synchronizing loop for the current step: the frame angle the
/// controller uses now and the frequency it rotates at until the next step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyncOutput {
    pub theta: f64,
    pub omega: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PllState {
    /// Frame angle, wrapped to (-π, π].
    pub theta: f64,
    /// Integral branch of the loop filter, rad/s.
    pub integ: f64,
}

/// PLL gains are in rad/s per pu of q-axis voltage (`kp`) and rad/s² per pu
/// (`ki`).
pub fn pll_omega(st: &PllState, v_q_meas: f64, g: &PiGains, omega_ref: f64) -> f64 {
    omega_ref + g.kp * v_q_meas + st.integ
}

pub fn pll_step(st: PllState, v_q_meas: f64, g: &PiGains, omega_ref: f64, dt: f64) -> (SyncOutput, PllState) {
    let omega = pll_omega(&st, v_q_meas, g, omega_ref);
    let next = PllState {
        theta: wrap_angle(st.theta + omega * dt),
        integ: st.integ + g.ki * v_q_meas * dt,
    };
    (SyncOutput { theta: st.theta, omega }, next)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DroopParams {
    /// Droop slope, rad/s per pu of active power.
    pub m_p: f64,
    /// Power filter cutoff, rad/s.
    pub lpf_cutoff: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DroopState {
    /// Frame angle, wrapped to (-π, π].
    pub theta: f64,
    /// Low-pass filtered active power, pu.
    pub p_filt: f64,
}

pub fn droop_omega(st: &DroopState, p_ref: f64, dp: &DroopParams, omega_ref: f64) -> f64 {
    omega_ref + dp.m_p * (p_ref - st.p_filt)
}

pub fn droop_step(
    st: DroopState,
    p_meas: f64,
    p_ref: f64,
    dp: &DroopParams,
    omega_ref: f64,
    dt: f64,
) -> (SyncOutput, DroopState) {
    let omega = droop_omega(&st, p_ref, dp, omega_ref);
    let next = DroopState {
        theta: wrap_angle(st.theta + omega * dt),
        p_filt: st.p_filt + dp.lpf_cutoff * dt * (p_meas - st.p_filt),
    };
    (SyncOutput { theta: st.theta, omega }, next)
}

/// Instantaneous active and reactive power in pu (amplitude-invariant, so
/// a 1 pu voltage and 1 pu current in phase give 1 pu power).
pub fn instantaneous_power(v: DqPair, i: DqPair) -> (f64, f64) {
    (v.d * i.d + v.q * i.q, v.q * i.d - v.d * i.q)
}

/// Gains and setpoints shared by both controllers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlParams {
    pub pll: PiGains,
    pub cur: PiGains,
    pub volt: PiGains,
    pub droop: DroopParams,
    /// Nominal angular frequency ω*, rad/s.
    pub omega_ref: f64,
}

impl Default for ControlParams {
    fn default() -> Self {
        let omega0 = 2.0 * PI * 50.0;
        Self {
            pll: PiGains::new(0.7 * omega0, 50.0 * omega0),
            // pu output per pu error; integral gains per second
            cur: PiGains::new(2.0, 200.0),
            volt: PiGains::new(20.0, 1000.0),
            droop: DroopParams {
                m_p: 0.02 * omega0,
                lpf_cutoff: 2.0 * PI * 50.0,
            },
            omega_ref: omega0,
        }
    }
}

impl ControlParams {
    pub fn validate(&self) -> Result<()> {
        self.pll.validate("control.pll")?;
        self.cur.validate("control.current")?;
        self.volt.validate("control.voltage")?;
        if !(self.droop.m_p.is_finite() && self.droop.m_p > 0.0) {
            return Err(Error::invalid("control.droop.m_p", "must be > 0"));
        }
        if !(self.droop.lpf_cutoff.is_finite() && self.droop.lpf_cutoff > 0.0) {
            return Err(Error::invalid("control.droop.lpf_cutoff", "must be > 0"));
        }
        if !(self.omega_ref.is_finite() && self.omega_ref > 0.0) {
            return Err(Error::invalid("control.omega_ref", "must be > 0"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const DT: f64 = 1e-5;

    #[test]
    fn pi_examples() {
        let g = PiGains::new(2.0, 10.0);
        assert_eq!(pi_step(PiState::ZERO, 0.0, &g, DT).0, 0.0);
        assert_eq!(pi_step(PiState::new(0.5), 0.25, &g, DT).0, 1.0);
    }

    #[test]
    fn pi_integrates_constant_error() {
        let g = PiGains::new(1.5, 40.0);
        let e = 0.3;
        let n = 20_000;
        let mut st = PiState::ZERO;
        let mut out = 0.0;
        for _ in 0..=n {
            (out, st) = pi_step(st, e, &g, DT);
        }
        let t = n as f64 * DT;
        // forward Euler is exact for a constant integrand
        assert!((out - (g.kp * e + g.ki * e * t)).abs() < 1e-10);
    }

    #[test]
    fn reinitialize_examples() {
        assert_eq!(pi_reinitialize(1.0, 2.0, 0.25).accum, 0.5);
        assert_eq!(pi_reinitialize(0.0, 3.0, 0.0).accum, 0.0);
    }

    #[test]
    fn pll_zero_error_runs_at_reference() {
        let g = ControlParams::default().pll;
        let (out, next) = pll_step(PllState { theta: 0.2, integ: 0.0 }, 0.0, &g, 314.0, DT);
        assert_eq!(out.omega, 314.0);
        assert_eq!(out.theta, 0.2);
        assert!((next.theta - (0.2 + 314.0 * DT)).abs() < 1e-15);
    }

    /// PLL against an ideal rotating unit vector. Returns the final q-axis
    /// voltage and frequency.
    fn lock_to_ideal_source(theta0: f64, phase_step: f64, steps: usize) -> (f64, f64) {
        let g = ControlParams::default().pll;
        let w = 2.0 * PI * 50.0;
        let mut st = PllState { theta: theta0, integ: 0.0 };
        let mut last = (0.0, 0.0);
        for k in 0..steps {
            let phase = w * k as f64 * DT + if k > steps / 2 { phase_step } else { 0.0 };
            let v_q = (phase - st.theta).sin();
            let (out, next) = pll_step(st, v_q, &g, w, DT);
            st = next;
            last = (v_q, out.omega);
        }
        last
    }

    #[test]
    fn pll_locks_from_offset() {
        let (v_q, omega) = lock_to_ideal_source(PI / 4.0, 0.0, 100_000);
        assert!(v_q.abs() < 1e-6, "v_q = {v_q}");
        assert!((omega - 2.0 * PI * 50.0).abs() < 1e-3);
    }

    #[test]
    fn pll_relocks_after_phase_step() {
        let (v_q, omega) = lock_to_ideal_source(0.0, 0.1, 200_000);
        assert!(v_q.abs() < 1e-6, "v_q = {v_q}");
        assert!((omega - 2.0 * PI * 50.0).abs() < 1e-3);
    }

    #[test]
    fn droop_examples() {
        let cp = ControlParams::default();
        let st = DroopState { theta: 0.0, p_filt: 0.4 };
        let (out, _) = droop_step(st, 0.4, 0.4, &cp.droop, cp.omega_ref, DT);
        assert_eq!(out.omega, cp.omega_ref);
        let (out, _) = droop_step(st, 0.4, 0.5, &cp.droop, cp.omega_ref, DT);
        assert!((out.omega - (cp.omega_ref + cp.droop.m_p * 0.1)).abs() < 1e-12);
    }

    #[test]
    fn droop_filter_follows_exponential() {
        let cp = ControlParams::default();
        let wc = cp.droop.lpf_cutoff;
        let mut st = DroopState::default();
        let p_step = 0.8;
        for k in 1..=10_000 {
            (_, st) = droop_step(st, p_step, 0.0, &cp.droop, cp.omega_ref, DT);
            let t = k as f64 * DT;
            let exact = p_step * (1.0 - (-wc * t).exp());
            // forward Euler's global error is bounded by about wc*dt/2 of the step
            assert!((st.p_filt - exact).abs() < 0.5 * wc * DT * p_step, "k = {k}");
        }
    }

    #[test]
    fn power_examples() {
        assert_eq!(instantaneous_power(DqPair::new(1.0, 0.0), DqPair::new(1.0, 0.0)), (1.0, 0.0));
        assert_eq!(instantaneous_power(DqPair::new(1.0, 0.0), DqPair::new(0.0, 1.0)), (0.0, -1.0));
    }

    #[test]
    fn gain_validation() {
        assert!(PiGains::new(0.0, 0.0).validate("g").is_err());
        assert!(PiGains::new(-1.0, 1.0).validate("g").is_err());
        assert!(PiGains::new(0.0, 1.0).validate("g").is_ok());
        assert!(ControlParams::default().validate().is_ok());
    }

    proptest! {
        #[test]
        fn reinitialized_pi_is_bumpless(y in -5.0..5.0f64, kp in 0.0..20.0f64, e in -2.0..2.0f64, ki in 0.0..500.0f64) {
            let st = pi_reinitialize(y, kp, e);
            let (out, _) = pi_step(st, e, &PiGains::new(kp, ki), DT);
            prop_assert!((out - y).abs() <= 4.0 * f64::EPSILON * y.abs().max((kp * e).abs()));
        }

        #[test]
        fn power_is_frame_invariant(vd in -2.0..2.0f64, vq in -2.0..2.0f64, id in -2.0..2.0f64, iq in -2.0..2.0f64, a in -PI..PI) {
            let (p0, q0) = instantaneous_power(DqPair::new(vd, vq), DqPair::new(id, iq));
            let (p1, q1) = instantaneous_power(DqPair::new(vd, vq).rotate(a), DqPair::new(id, iq).rotate(a));
            prop_assert!((p0 - p1).abs() < 1e-12 && (q0 - q1).abs() < 1e-12);
        }

        #[test]
        fn angles_stay_wrapped(theta in -PI..PI, vq in -1.0..1.0f64, p in -2.0..2.0f64) {
            let cp = ControlParams::default();
            let (_, pll) = pll_step(PllState { theta, integ: 0.0 }, vq, &cp.pll, cp.omega_ref, 1e-3);
            let (_, dr) = droop_step(DroopState { theta, p_filt: 0.0 }, p, 1.0, &cp.droop, cp.omega_ref, 1e-3);
            prop_assert!(pll.theta > -PI && pll.theta <= PI);
            prop_assert!(dr.theta > -PI && dr.theta <= PI);
        }
    }
}
