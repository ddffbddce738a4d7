//! A GFL to GFM hand-off with the full state mapping: the mapped references
//! and integrator values, and the resulting transient.

use modeswitch::equilibrium::current_reference_for_grid_current;
use modeswitch::mapping::MappingFlags;
use modeswitch::modes::{Mode, Refs};
use modeswitch::sim::{run_scenario, scenario_metrics, Scenario};
use modeswitch::SystemParams;

fn main() -> modeswitch::Result<()> {
    let params = SystemParams::default();
    let refs = Refs::Gfl(current_reference_for_grid_current(0.51, &params));
    let sc = Scenario::switch("gfl_to_gfm", Mode::Gfl, refs, MappingFlags::FULL, 0.1, 0.4);
    let trace = run_scenario(&sc, &params)?;
    let sw = trace.switch.as_ref().expect("switch recorded");
    let m = &sw.full;
    println!("theta0            {:.5} rad", m.theta0);
    println!("target refs       {:?}", m.refs);
    println!("current PI init   {:.5}/{:.5}", m.pi_inits.cur_d.accum, m.pi_inits.cur_q.accum);
    if let Some((d, q)) = m.pi_inits.volt {
        println!("voltage PI init   {:.5}/{:.5}", d.accum, q.accum);
    }
    println!("command before    {:?}", sw.cmd_before.dq);
    println!("command after     {:?}", sw.cmd_after.map(|c| c.dq));
    let metrics = scenario_metrics(&trace, 0.2)?;
    for (name, s) in &metrics.signals {
        println!("{name:>6}: max deviation {:.2e}", s.max_deviation);
    }
    Ok(())
}
