//! The LCL filter under a constant grid-frame inverter voltage against the
//! steady-state phasor solution.

use modeswitch::frames::DqPair;
use modeswitch::modes::Command;
use modeswitch::plant::{grid_angle, sync_plant_derivative, PlantState, SyncPlant};
use modeswitch::sim::rk4_plant;
use modeswitch::SystemParams;
use nalgebra::Complex;
use proptest::prelude::*;

/// Steady state per unit, with phasors written d + jq in the grid frame.
fn phasor_steady_state(v_i: DqPair, params: &SystemParams) -> SyncPlant {
    let p = &params.plant;
    let b = &params.base;
    let w = p.omega_g;
    let j = Complex::new(0.0, 1.0);
    let z_f = Complex::new(p.r_f, w * p.l_f);
    let z_g = Complex::new(p.r_g, w * p.l_g);
    let y_c = j * w * p.c_f;
    let vi = Complex::new(v_i.d, v_i.q) * b.v_base;
    let vg = Complex::new(p.v_g_amp, 0.0);
    let vc = (vi / z_f + vg / z_g) / (z_f.inv() + y_c + z_g.inv());
    let il = (vi - vc) / z_f;
    let ig = (vc - vg) / z_g;
    let pu = |z: Complex<f64>, base: f64| DqPair::new(z.re / base, z.im / base);
    SyncPlant {
        v_c: pu(vc, b.v_base),
        i_g: pu(ig, b.i_base),
        i_l: pu(il, b.i_base),
    }
}

fn max_gap(a: &SyncPlant, b: &SyncPlant) -> f64 {
    a.components()
        .iter()
        .zip(b.components())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

#[test]
fn phasor_solution_is_a_rest_point_of_the_sync_frame_model() {
    let params = SystemParams::default();
    for v_i in [DqPair::new(1.0, 0.05), DqPair::new(0.9, -0.2), DqPair::new(1.1, 0.3)] {
        let x = phasor_steady_state(v_i, &params);
        let dx = sync_plant_derivative(&x, v_i, &params.base, &params.plant);
        let rate = dx.components().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(rate < 1e-8, "derivative {rate:e} at {v_i:?}");
    }
}

#[test]
fn stationary_simulation_converges_to_phasor_solution() {
    let params = SystemParams::default();
    let v_i = DqPair::new(1.0, 0.05);
    let dt = 1e-5;
    let mut x = PlantState::default();
    // slowest filter pole is R_f / L_f = 10 /s; 3 s leaves e^-30
    let n = 300_000u64;
    for k in 0..n {
        let t = k as f64 * dt;
        let cmd = Command {
            dq: v_i,
            theta: grid_angle(t, &params.plant),
            omega: params.plant.omega_g,
        };
        x = rk4_plant(&x, &cmd, t, dt, &params);
    }
    let t_end = n as f64 * dt;
    let got = SyncPlant::from_stationary(&x, t_end, &params.base, &params.plant);
    let want = phasor_steady_state(v_i, &params);
    assert!(max_gap(&got, &want) < 1e-8, "{got:?} vs {want:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sync_model_vanishes_only_at_phasor_solution(d in 0.5f64..1.5, q in -0.5f64..0.5, kick in 1e-3f64..0.1) {
        let params = SystemParams::default();
        let v_i = DqPair::new(d, q);
        let mut x = phasor_steady_state(v_i, &params);
        x.i_g.q += kick;
        let dx = sync_plant_derivative(&x, v_i, &params.base, &params.plant);
        prop_assert!(dx.components().iter().any(|v| v.abs() > 1.0));
    }
}
