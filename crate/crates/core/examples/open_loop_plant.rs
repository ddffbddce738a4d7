//! The LCL filter driven by a fixed inverter voltage, settling onto its
//! phasor steady state.

use modeswitch::frames::DqPair;
use modeswitch::modes::Command;
use modeswitch::plant::{grid_angle, PlantState, SyncPlant};
use modeswitch::sim::rk4_plant;
use modeswitch::SystemParams;

fn main() {
    let params = SystemParams::default();
    let v_i = DqPair::new(1.0, 0.05);
    let dt = 1e-5;
    let mut x = PlantState::default();
    for k in 0..=200_000u64 {
        let t = k as f64 * dt;
        if k % 40_000 == 0 {
            let s = SyncPlant::from_stationary(&x, t, &params.base, &params.plant);
            println!(
                "t {t:.1} s  v_c ({:.4}, {:.4})  i_g ({:.4}, {:.4})  i_l ({:.4}, {:.4}) pu",
                s.v_c.d, s.v_c.q, s.i_g.d, s.i_g.q, s.i_l.d, s.i_l.q
            );
        }
        let cmd = Command {
            dq: v_i,
            theta: grid_angle(t, &params.plant),
            omega: params.plant.omega_g,
        };
        x = rk4_plant(&x, &cmd, t, dt, &params);
    }
}
