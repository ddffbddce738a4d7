//! Equilibria of the two closed loops, their local stability, and sampled
//! attraction basins.
//!
//! Everything here works in the grid-synchronous frame: plant states are
//! rotated by the grid angle and each controller angle is replaced by its
//! offset δ from the grid angle. In that frame an operating point is a true
//! fixed point.

mod basin;
mod vector;

pub use basin::{probe_basin, BasinAxis, BasinClass, BasinMap, BasinOptions, BasinPoint};
pub use vector::{component_names, from_vector, to_vector};

use nalgebra::{Complex, DMatrix, DVector};

use crate::control::{PiState, PllState, DroopState};
use crate::error::{Error, Result};
use crate::frames::{wrap_angle, DqPair};
use crate::modes::{ClosedLoop, GflRefs, GflState, GfmRefs, GfmState, Mode, ModeState, Refs};
use crate::plant::{sync_plant_derivative, SyncPlant};
use crate::sim::{SimState, Simulator};
use crate::SystemParams;

/// Closed loop in the grid-synchronous frame.
pub type SyncClosedLoop = ClosedLoop<SyncPlant>;

/// Newton convergence threshold on the residual 2-norm.
pub const NEWTON_TOL: f64 = 1e-10;
pub const NEWTON_MAX_ITER: usize = 50;
/// Relative step of the central-difference Jacobian.
pub const FD_REL_STEP: f64 = 1e-7;
/// Jacobians with a larger singular-value ratio are rejected.
pub const MAX_CONDITION: f64 = 1e14;

#[derive(Debug, Clone, PartialEq)]
pub struct Equilibrium {
    pub state: SyncClosedLoop,
    pub refs: Refs,
    pub residual_norm: f64,
    pub iterations: usize,
    /// Eigenvalues of the closed-loop Jacobian, 1/s, ascending real part.
    pub eigenvalues: Vec<Complex<f64>>,
    pub stable: bool,
}

impl Equilibrium {
    pub fn mode(&self) -> Mode {
        self.state.ctrl.mode()
    }

    pub fn max_real_eigenvalue(&self) -> f64 {
        self.eigenvalues.iter().map(|c| c.re).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Capacitor voltage, grid and inverter currents in the controller's own
    /// frame, pu.
    pub fn controller_frame_plant(&self) -> SyncPlant {
        let delta = self.state.ctrl.theta();
        let p = &self.state.plant;
        SyncPlant {
            v_c: p.v_c.rotate(-delta),
            i_g: p.i_g.rotate(-delta),
            i_l: p.i_l.rotate(-delta),
        }
    }

    /// Inverter voltage command in the controller frame, pu.
    pub fn command(&self, params: &SystemParams) -> DqPair {
        controller_rates(&self.state, &self.refs, params).expect("mode checked at construction").command
    }
}

fn check_mode(state: &SyncClosedLoop, refs: &Refs) -> Result<()> {
    if state.ctrl.mode() != refs.mode() {
        return Err(Error::invalid(
            "refs",
            format!("{} references given for a {} state", refs.mode(), state.ctrl.mode()),
        ));
    }
    Ok(())
}

struct ControllerRates {
    command: DqPair,
    rates: Vec<f64>,
}

/// Controller state derivatives (same order as the state vector) and the
/// command they produce, continuous-time.
fn controller_rates(x: &SyncClosedLoop, refs: &Refs, params: &SystemParams) -> Result<ControllerRates> {
    check_mode(x, refs)?;
    let cp = &params.control;
    let w_g = params.plant.omega_g;
    let delta = x.ctrl.theta();
    let v_c = x.plant.v_c.rotate(-delta);
    let i_l = x.plant.i_l.rotate(-delta);
    let current = |i_ref: DqPair, cur_d: PiState, cur_q: PiState| {
        let e = i_ref - i_l;
        (DqPair::new(cp.cur.kp * e.d + cur_d.accum, cp.cur.kp * e.q + cur_q.accum), e * cp.cur.ki)
    };
    Ok(match (x.ctrl, refs) {
        (ModeState::Gfl(s), Refs::Gfl(r)) => {
            let omega = cp.omega_ref + cp.pll.kp * v_c.q + s.pll.integ;
            let (command, dcur) = current(r.i_ref, s.cur_d, s.cur_q);
            ControllerRates {
                command,
                rates: vec![omega - w_g, cp.pll.ki * v_c.q, dcur.d, dcur.q],
            }
        }
        (ModeState::Gfm(s), Refs::Gfm(r)) => {
            let i_g = x.plant.i_g.rotate(-delta);
            let p = v_c.dot(&i_g);
            let omega = cp.omega_ref + cp.droop.m_p * (r.p_ref - s.droop.p_filt);
            let ev = r.v_ref - v_c;
            let i_ref = DqPair::new(cp.volt.kp * ev.d + s.volt_d.accum, cp.volt.kp * ev.q + s.volt_q.accum);
            let (command, dcur) = current(i_ref, s.cur_d, s.cur_q);
            ControllerRates {
                command,
                rates: vec![
                    omega - w_g,
                    cp.droop.lpf_cutoff * (p - s.droop.p_filt),
                    cp.volt.ki * ev.d,
                    cp.volt.ki * ev.q,
                    dcur.d,
                    dcur.q,
                ],
            }
        }
        _ => unreachable!("mode checked above"),
    })
}

/// Continuous-time closed-loop derivative in the synchronous frame, ordered
/// as [`to_vector`]. Plant rows are pu/s, angle rows rad/s, PLL integrator
/// rad/s², PI rows pu/s.
pub fn closed_loop_residual(x: &SyncClosedLoop, refs: &Refs, params: &SystemParams) -> Result<Vec<f64>> {
    let ctrl = controller_rates(x, refs, params)?;
    let v_i = ctrl.command.rotate(x.ctrl.theta());
    let dp = sync_plant_derivative(&x.plant, v_i, &params.base, &params.plant);
    let mut r = dp.components().to_vec();
    r.extend(ctrl.rates);
    Ok(r)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn residual_vec(mode: Mode, v: &[f64], refs: &Refs, params: &SystemParams) -> Vec<f64> {
    closed_loop_residual(&from_vector(mode, v), refs, params).expect("mode checked by caller")
}

/// Central-difference Jacobian of the residual at `v`.
fn jacobian(mode: Mode, v: &[f64], refs: &Refs, params: &SystemParams) -> DMatrix<f64> {
    let n = v.len();
    let mut jac = DMatrix::zeros(n, n);
    let mut x = v.to_vec();
    for j in 0..n {
        let h = FD_REL_STEP * v[j].abs().max(1.0);
        x[j] = v[j] + h;
        let fp = residual_vec(mode, &x, refs, params);
        x[j] = v[j] - h;
        let fm = residual_vec(mode, &x, refs, params);
        x[j] = v[j];
        for i in 0..n {
            jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    jac
}

/// Damped Newton iteration from `guess`. On success the returned
/// equilibrium carries its eigenvalues.
pub fn solve_equilibrium(refs: &Refs, params: &SystemParams, guess: &SyncClosedLoop) -> Result<Equilibrium> {
    check_mode(guess, refs)?;
    let mode = refs.mode();
    let mut v = to_vector(guess);
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("guess", "non-finite initial state"));
    }
    let mut f = residual_vec(mode, &v, refs, params);
    let mut fnorm = norm(&f);
    let mut iterations = 0;
    while fnorm >= NEWTON_TOL {
        if iterations == NEWTON_MAX_ITER {
            return Err(Error::NoConvergence {
                iterations,
                residual: fnorm,
                last_iterate: v,
            });
        }
        iterations += 1;
        let jac = jacobian(mode, &v, refs, params);
        let rhs = -DVector::from_vec(f.clone());
        let Some(step) = jac.lu().solve(&rhs) else {
            return Err(Error::NoConvergence {
                iterations,
                residual: fnorm,
                last_iterate: v,
            });
        };
        // backtrack until the residual drops
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let trial: Vec<f64> = v.iter().zip(step.iter()).map(|(x, s)| x + lambda * s).collect();
            let ft = residual_vec(mode, &trial, refs, params);
            let nt = norm(&ft);
            if nt < fnorm {
                v = trial;
                f = ft;
                fnorm = nt;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if !accepted {
            // stagnated at the rounding floor
            if fnorm < 1e3 * NEWTON_TOL {
                break;
            }
            return Err(Error::NoConvergence {
                iterations,
                residual: fnorm,
                last_iterate: v,
            });
        }
    }
    let mut state = from_vector(mode, &v);
    wrap_delta(&mut state);
    let eigenvalues = linearize_state(&state, refs, params)?;
    let stable = eigenvalues.iter().all(|c| c.re < 0.0);
    Ok(Equilibrium {
        state,
        refs: *refs,
        residual_norm: fnorm,
        iterations,
        eigenvalues,
        stable,
    })
}

fn wrap_delta(x: &mut SyncClosedLoop) {
    match &mut x.ctrl {
        ModeState::Gfl(s) => s.pll.theta = wrap_angle(s.pll.theta),
        ModeState::Gfm(s) => s.droop.theta = wrap_angle(s.droop.theta),
    }
}

/// Eigenvalues of the finite-difference Jacobian at `eq`, ascending real
/// part.
pub fn linearize(eq: &Equilibrium, params: &SystemParams) -> Result<Vec<Complex<f64>>> {
    linearize_state(&eq.state, &eq.refs, params)
}

fn linearize_state(x: &SyncClosedLoop, refs: &Refs, params: &SystemParams) -> Result<Vec<Complex<f64>>> {
    let mode = refs.mode();
    let jac = jacobian(mode, &to_vector(x), refs, params);
    let sv = jac.clone().singular_values();
    let (smax, smin) = (sv.max(), sv.min());
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if condition.is_nan() || condition >= MAX_CONDITION {
        return Err(Error::SingularJacobian { condition });
    }
    let mut eig: Vec<Complex<f64>> = jac.complex_eigenvalues().iter().copied().collect();
    eig.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    Ok(eig)
}

fn pu_impedances(params: &SystemParams) -> (DqPair, DqPair, f64) {
    let p = &params.plant;
    let z = params.base.z_base;
    let w = p.omega_g;
    let z_f = DqPair::new(p.r_f / z, w * p.l_f / z);
    let z_g = DqPair::new(p.r_g / z, w * p.l_g / z);
    (z_f, z_g, w * p.c_f * z)
}

/// Rough operating point from a phasor calculation, used to seed Newton and
/// the settling run. Not an exact equilibrium.
pub fn phasor_guess(refs: &Refs, params: &SystemParams) -> SyncClosedLoop {
    let (z_f, z_g, b_c) = pu_impedances(params);
    let v_g = params.v_g_pu();
    let j = DqPair::new(0.0, 1.0);
    let omega_offset = params.plant.omega_g - params.control.omega_ref;
    match refs {
        Refs::Gfl(r) => {
            // controller frame: capacitor voltage on the d-axis
            let i_l = r.i_ref;
            let v_c = DqPair::new(v_g, 0.0);
            let i_g = i_l - j.cmul(v_c).scale(b_c);
            let v_g_ctrl = v_c - z_g.cmul(i_g);
            let delta = -v_g_ctrl.angle();
            let cmd = v_c + z_f.cmul(i_l);
            let plant = SyncPlant {
                v_c: v_c.rotate(delta),
                i_g: i_g.rotate(delta),
                i_l: i_l.rotate(delta),
            };
            ClosedLoop {
                plant,
                ctrl: ModeState::Gfl(GflState {
                    pll: PllState {
                        theta: delta,
                        integ: omega_offset,
                    },
                    cur_d: PiState::new(cmd.d),
                    cur_q: PiState::new(cmd.q),
                }),
            }
        }
        Refs::Gfm(r) => {
            let p_filt = r.p_ref - omega_offset / params.control.droop.m_p;
            let power = |delta: f64| {
                let v_c = r.v_ref.rotate(delta);
                let i_g = (v_c - DqPair::new(v_g, 0.0)).cdiv(z_g);
                v_c.dot(&i_g)
            };
            // bisection on the power angle over the monotone branch
            let (mut lo, mut hi) = (-1.2f64, 1.2f64);
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                if power(mid) < p_filt {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let delta = 0.5 * (lo + hi);
            let v_c = r.v_ref;
            let i_g = (v_c.rotate(delta) - DqPair::new(v_g, 0.0)).cdiv(z_g).rotate(-delta);
            let i_l = i_g + j.cmul(v_c).scale(b_c);
            let cmd = v_c + z_f.cmul(i_l);
            let plant = SyncPlant {
                v_c: v_c.rotate(delta),
                i_g: i_g.rotate(delta),
                i_l: i_l.rotate(delta),
            };
            ClosedLoop {
                plant,
                ctrl: ModeState::Gfm(GfmState {
                    droop: DroopState { theta: delta, p_filt },
                    volt_d: PiState::new(i_l.d),
                    volt_q: PiState::new(i_l.q),
                    cur_d: PiState::new(cmd.d),
                    cur_q: PiState::new(cmd.q),
                }),
            }
        }
    }
}

/// Solves from the phasor guess.
pub fn find_equilibrium(refs: &Refs, params: &SystemParams) -> Result<Equilibrium> {
    refs.validate()?;
    solve_equilibrium(refs, params, &phasor_guess(refs, params))
}

/// GFL current reference that yields a grid-side current of
/// `(i_g_d, 0)` pu in the PLL frame at steady state (phasor solution).
pub fn current_reference_for_grid_current(i_g_d: f64, params: &SystemParams) -> GflRefs {
    let (_, z_g, b_c) = pu_impedances(params);
    let v_g = params.v_g_pu();
    // |v_c - z_g i_g| = v_g with v_c = (V, 0), i_g = (I, 0)
    let v = z_g.d * i_g_d + (v_g * v_g - (z_g.q * i_g_d).powi(2)).sqrt();
    GflRefs {
        i_ref: DqPair::new(i_g_d, b_c * v),
    }
}

/// Same-operating-point GFM references for a GFL equilibrium: the
/// capacitor voltage magnitude and the delivered power.
pub fn matching_gfm_refs(gfl: &Equilibrium) -> GfmRefs {
    let p = &gfl.state.plant;
    GfmRefs {
        v_ref: DqPair::new(p.v_c.norm(), 0.0),
        p_ref: p.v_c.dot(&p.i_g),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SettleOptions {
    pub t_max: f64,
    /// Residual 2-norm below which the run counts as settled.
    pub tol: f64,
    pub dt: f64,
    /// Residual is checked every this many steps.
    pub check_every: u64,
}

impl Default for SettleOptions {
    fn default() -> Self {
        Self {
            t_max: 2.0,
            tol: 1e-6,
            dt: 1e-5,
            check_every: 100,
        }
    }
}

/// Runs the discrete closed loop from the phasor guess until the
/// synchronous-frame derivative falls below `opts.tol`.
pub fn settle_by_simulation(refs: &Refs, params: &SystemParams, opts: &SettleOptions) -> Result<SyncClosedLoop> {
    settle_from(&phasor_guess(refs, params), refs, params, opts)
}

pub fn settle_from(start: &SyncClosedLoop, refs: &Refs, params: &SystemParams, opts: &SettleOptions) -> Result<SyncClosedLoop> {
    check_mode(start, refs)?;
    let (gfl_refs, gfm_refs) = split_refs(refs);
    let state = SimState::from_sync(start, gfl_refs, gfm_refs, 0.0, params);
    let mut sim = Simulator::new(*params, opts.dt, state)?;
    let mut residual = f64::INFINITY;
    while sim.time() < opts.t_max {
        for _ in 0..opts.check_every {
            sim.step()?;
        }
        let x = sim.sync_state();
        residual = norm(&closed_loop_residual(&x, refs, params)?);
        if residual < opts.tol {
            return Ok(x);
        }
    }
    Err(Error::NotSettled {
        t_max: opts.t_max,
        residual,
    })
}

/// Splits a mode's references into the pair the simulator carries; the
/// other mode gets placeholder references it never acts on.
pub fn split_refs(refs: &Refs) -> (GflRefs, GfmRefs) {
    let gfl = GflRefs { i_ref: DqPair::ZERO };
    let gfm = GfmRefs {
        v_ref: DqPair::new(1.0, 0.0),
        p_ref: 0.0,
    };
    match refs {
        Refs::Gfl(r) => (*r, gfm),
        Refs::Gfm(r) => (gfl, *r),
    }
}
