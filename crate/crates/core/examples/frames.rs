//! Park/Clarke transforms and per-unit bases.

use std::f64::consts::PI;

use modeswitch::frames::{abc_to_alphabeta, alphabeta_to_abc, inverse_park, park, AbcTriple, PerUnitBase};

fn main() {
    let base = PerUnitBase::default_hardware();
    println!(
        "bases: s {} W, v {:.3} V, i {:.4} A, z {:.3} ohm, omega {:.3} rad/s",
        base.s_base, base.v_base, base.i_base, base.z_base, base.omega_base
    );

    // balanced set at 30 degrees, amplitude 1
    let th = PI / 6.0;
    let abc = AbcTriple {
        a: th.cos(),
        b: (th - 2.0 * PI / 3.0).cos(),
        c: (th + 2.0 * PI / 3.0).cos(),
    };
    let ab = abc_to_alphabeta(abc);
    let dq_aligned = park(ab, th);
    let dq_grid = park(ab, 0.0);
    println!("alpha-beta {ab:?}");
    println!("dq in a frame at the phasor angle {dq_aligned:?}");
    println!("dq in a frame at zero {dq_grid:?}");
    let back = alphabeta_to_abc(inverse_park(dq_aligned, th));
    println!("round trip abc {back:?}");
}
