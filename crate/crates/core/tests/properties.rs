//! Randomized properties across operating points and configurations.

use modeswitch::cli::{parse_config, RefInput, RunConfig};
use modeswitch::equilibrium::{current_reference_for_grid_current, find_equilibrium, matching_gfm_refs};
use modeswitch::mapping::MappingFlags;
use modeswitch::modes::{Mode, Refs};
use modeswitch::sim::{run_scenario, scenario_metrics, Scenario};
use modeswitch::SystemParams;
use proptest::prelude::*;

fn refs_at(i_g: f64, mode: Mode, p: &SystemParams) -> Refs {
    let gfl = Refs::Gfl(current_reference_for_grid_current(i_g, p));
    match mode {
        Mode::Gfl => gfl,
        Mode::Gfm => Refs::Gfm(matching_gfm_refs(&find_equilibrium(&gfl, p).unwrap())),
    }
}

fn deviation(sc: &Scenario, p: &SystemParams) -> f64 {
    let tr = run_scenario(sc, p).unwrap();
    scenario_metrics(&tr, 0.2).unwrap().max_plant_deviation()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn full_mapping_is_transient_free_across_operating_points(i_g in 0.1f64..0.9, gfm_first in any::<bool>()) {
        let p = SystemParams::default();
        let from = if gfm_first { Mode::Gfm } else { Mode::Gfl };
        let sc = Scenario::switch("op", from, refs_at(i_g, from, &p), MappingFlags::FULL, 0.05, 0.3);
        let d = deviation(&sc, &p);
        prop_assert!(d < 1e-6, "{from} at {i_g}: {d:e}");
    }

    #[test]
    fn config_round_trips(
        l_f in 1e-3f64..1e-2,
        c_f in 1e-6f64..1e-4,
        kp in 0.1f64..10.0,
        m_p in 1.0f64..30.0,
        i_g in 0.0f64..1.0,
        decimation in 1usize..50,
    ) {
        let mut c = RunConfig::default();
        c.params.plant.l_f = l_f;
        c.params.plant.c_f = c_f;
        c.params.control.cur.kp = kp;
        c.params.control.droop.m_p = m_p;
        c.decimation = decimation;
        c.scenarios[0].initial_refs = RefInput::GridCurrent(i_g);
        prop_assert_eq!(parse_config(&c.to_toml()).unwrap(), c);
    }
}

#[test]
fn halving_the_step_leaves_switch_metrics_unchanged() {
    let p = SystemParams::default();
    for from in [Mode::Gfl, Mode::Gfm] {
        let refs = refs_at(0.51, from, &p);
        let mut devs = Vec::new();
        for dt in [1e-5, 5e-6] {
            let mut sc = Scenario::switch("dt", from, refs, MappingFlags::NONE, 0.1, 0.35);
            sc.dt = dt;
            devs.push(deviation(&sc, &p));
        }
        let rel = (devs[0] - devs[1]).abs() / devs[1];
        assert!(rel < 0.01, "{from}: {devs:?}");
    }
}
