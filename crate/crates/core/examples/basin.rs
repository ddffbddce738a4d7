//! Basin of attraction of the GFL operating point over PLL angle and grid
//! current offsets.

use modeswitch::equilibrium::{
    current_reference_for_grid_current, find_equilibrium, probe_basin, BasinAxis, BasinClass, BasinOptions,
};
use modeswitch::modes::{Mode, Refs};
use modeswitch::SystemParams;

fn main() -> modeswitch::Result<()> {
    let params = SystemParams::default();
    let eq = find_equilibrium(&Refs::Gfl(current_reference_for_grid_current(0.51, &params)), &params)?;
    let angles: Vec<f64> = (-6..=6).map(|k| k as f64 * 0.5).collect();
    let axes = [
        BasinAxis::named(Mode::Gfl, "delta", angles)?,
        BasinAxis::named(Mode::Gfl, "i_gd", vec![-0.5, 0.0, 0.5])?,
    ];
    let map = probe_basin(&eq, &params, &axes, &BasinOptions::default())?;
    for p in &map.points {
        println!("d_delta {:+.1} rad, d_i_gd {:+.1} pu -> {}", p.offset[0], p.offset[1], p.class);
    }
    println!(
        "{} converged, {} diverged, {} undecided",
        map.count(BasinClass::Converged),
        map.count(BasinClass::Diverged),
        map.count(BasinClass::Undecided)
    );
    Ok(())
}
