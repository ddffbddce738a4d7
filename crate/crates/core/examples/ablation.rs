//! Each part of the mapping switched off in turn, for both directions.

use modeswitch::equilibrium::{current_reference_for_grid_current, find_equilibrium, matching_gfm_refs};
use modeswitch::mapping::MappingFlags;
use modeswitch::modes::{Mode, Refs};
use modeswitch::sim::{run_batch, scenario_metrics, Scenario};
use modeswitch::SystemParams;

fn main() -> modeswitch::Result<()> {
    let params = SystemParams::default();
    let gfl = Refs::Gfl(current_reference_for_grid_current(0.51, &params));
    let gfm = Refs::Gfm(matching_gfm_refs(&find_equilibrium(&gfl, &params)?));
    let flags = [
        MappingFlags::FULL,
        MappingFlags::SYNC_ONLY,
        MappingFlags::AMPLITUDE_ONLY,
        MappingFlags::NONE,
    ];
    let scenarios: Vec<Scenario> = [(Mode::Gfl, gfl), (Mode::Gfm, gfm)]
        .iter()
        .flat_map(|&(from, refs)| {
            flags
                .iter()
                .map(move |f| Scenario::switch(format!("{from}->{} {}", from.other(), f.label()), from, refs, *f, 0.1, 0.4))
        })
        .collect();
    for (sc, res) in scenarios.iter().zip(run_batch(&scenarios, &params, true)) {
        let m = scenario_metrics(&res?, 0.2)?;
        let v_c = m.get("v_c").expect("v_c metric");
        println!(
            "{:<28} plant deviation {:.3e} pu, v_c settles in {:.3} s",
            sc.name,
            m.max_plant_deviation(),
            v_c.settling_time
        );
    }
    Ok(())
}
