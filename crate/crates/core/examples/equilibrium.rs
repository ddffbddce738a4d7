//! Operating points of both modes at the same grid current, with their
//! slowest poles.

use modeswitch::equilibrium::{current_reference_for_grid_current, find_equilibrium, matching_gfm_refs};
use modeswitch::modes::Refs;
use modeswitch::SystemParams;

fn main() -> modeswitch::Result<()> {
    let params = SystemParams::default();
    let gfl = find_equilibrium(&Refs::Gfl(current_reference_for_grid_current(0.51, &params)), &params)?;
    let gfm = find_equilibrium(&Refs::Gfm(matching_gfm_refs(&gfl)), &params)?;
    for eq in [&gfl, &gfm] {
        let pl = eq.controller_frame_plant();
        let cmd = eq.command(&params);
        println!("{}:", eq.mode());
        println!("  v_c  {:.4}/{:.4} pu", pl.v_c.d, pl.v_c.q);
        println!("  i_l  {:.4}/{:.4} pu", pl.i_l.d, pl.i_l.q);
        println!("  i_g  {:.4}/{:.4} pu", pl.i_g.d, pl.i_g.q);
        println!("  v_i* {:.4}/{:.4} pu", cmd.d, cmd.q);
        println!("  refs {:?}", eq.refs);
        println!(
            "  {} Newton iterations, residual {:.1e}, slowest pole {:.1} /s",
            eq.iterations,
            eq.residual_norm,
            eq.max_real_eigenvalue()
        );
    }
    Ok(())
}
