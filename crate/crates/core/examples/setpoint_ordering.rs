//! A setpoint change before the switch and one after it, with the switch
//! transient measured in each.

use modeswitch::equilibrium::{current_reference_for_grid_current, find_equilibrium, matching_gfm_refs};
use modeswitch::mapping::MappingFlags;
use modeswitch::modes::{Mode, Refs};
use modeswitch::sim::{run_scenario, scenario_metrics, Ordering, Scenario, SetpointChange};
use modeswitch::SystemParams;

fn main() -> modeswitch::Result<()> {
    let params = SystemParams::default();
    let start = Refs::Gfl(current_reference_for_grid_current(0.51, &params));
    let low_gfl = Refs::Gfl(current_reference_for_grid_current(0.3, &params));
    let low_gfm = Refs::Gfm(matching_gfm_refs(&find_equilibrium(&low_gfl, &params)?));

    let mut before = Scenario::switch("before", Mode::Gfl, start, MappingFlags::FULL, 0.6, 1.0);
    before.ordering = Ordering::SetpointBeforeSwitch;
    before.schedule = vec![SetpointChange { t: 0.1, refs: low_gfl }];

    let mut after = Scenario::switch("after", Mode::Gfl, start, MappingFlags::FULL, 0.1, 1.0);
    after.ordering = Ordering::SetpointAfterSwitch;
    after.schedule = vec![SetpointChange { t: 0.4, refs: low_gfm }];

    for sc in [before, after] {
        let trace = run_scenario(&sc, &params)?;
        let m = scenario_metrics(&trace, 0.2)?;
        let end = trace.records.last().expect("non-empty trace");
        println!(
            "{:<6}: switch at {:.2} s, window {:.3} s, switch deviation {:.2e} pu, final p {:.3} pu",
            sc.name,
            m.t_switch,
            m.window,
            m.max_plant_deviation(),
            end.p
        );
    }
    Ok(())
}
