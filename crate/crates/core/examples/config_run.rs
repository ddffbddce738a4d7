//! Parse a configuration with overrides and run it as the `run` subcommand
//! does, writing traces and a report under `out/config_run`.

use modeswitch::cli::{parse_config_with_overrides, run_command};

const CONFIG: &str = r#"
[plant]
l_g = "4 mH"
r_g = "0.4 ohm"

[[scenario]]
name = "heavy_load"
initial_mode = "gfl"
target_mode = "gfm"
t_switch = "50 ms"
duration = "250 ms"
initial_refs = { grid_current = 0.8 }
"#;

fn main() -> modeswitch::Result<()> {
    let mut cfg = parse_config_with_overrides(
        CONFIG,
        &["output_dir=\"out/config_run\"".into(), "control.current.kp=2.5".into()],
    )?;
    cfg.parallel = false;
    let outcome = run_command(&cfg)?;
    for (k, v) in outcome.report.entries().iter().filter(|(k, _)| k.ends_with("max_plant_deviation") || k.ends_with(".pass")) {
        println!("{k} = {v}");
    }
    Ok(())
}
