//! End-to-end behaviour of the command-line entry points.

use std::fs;
use std::path::{Path, PathBuf};

use modeswitch::cli::{main_with, parse_config, Report};
use modeswitch::sim::CSV_HEADER;

fn default_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.toml")
}

fn run(args: &[&str]) -> i32 {
    let mut v = vec!["modeswitch"];
    v.extend_from_slice(args);
    main_with(v)
}

fn report(path: &Path) -> Report {
    Report::parse(&fs::read_to_string(path).unwrap())
}

#[test]
fn shipped_config_has_hardware_values() {
    let cfg = parse_config(&fs::read_to_string(default_config()).unwrap()).unwrap();
    let p = cfg.params.plant;
    assert!((p.l_f - 5e-3).abs() < 1e-15);
    assert!((p.c_f - 30e-6).abs() < 1e-18);
    assert!((p.l_g - 4e-3).abs() < 1e-15);
    assert!((p.r_f - 0.05).abs() < 1e-15);
    assert!((p.r_g - 0.4).abs() < 1e-15);
    assert_eq!(cfg.params, modeswitch::SystemParams::default(), "{:#?}", cfg.params);
}

#[test]
fn run_default_scenarios() {
    let out = tempfile::tempdir().unwrap();
    let dir = out.path().to_str().unwrap();
    assert_eq!(run(&["run", "--config", default_config().to_str().unwrap(), "--out", dir, "--gnuplot"]), 0);
    let r = report(&out.path().join("report.txt"));
    assert_eq!(r.get("scenarios"), Some("2"));
    for name in ["gfl_to_gfm_full", "gfm_to_gfl_full"] {
        let dev: f64 = r.get(&format!("scenario.{name}.metrics.max_plant_deviation")).unwrap().parse().unwrap();
        assert!(dev < 1e-3, "{name}: {dev}");
        assert_eq!(r.get(&format!("scenario.{name}.pass")), Some("true"));
        let csv = fs::read_to_string(out.path().join(format!("{name}.csv"))).unwrap();
        assert_eq!(csv.lines().next(), Some(CSV_HEADER));
        assert!(out.path().join(format!("{name}.gp")).exists());
    }
}

#[test]
fn sweep_writes_eight_traces_and_one_report() {
    let out = tempfile::tempdir().unwrap();
    let dir = out.path().to_str().unwrap();
    assert_eq!(run(&["sweep", "--config", default_config().to_str().unwrap(), "--out", dir]), 0);
    let names: Vec<String> = fs::read_dir(out.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    assert_eq!(names.iter().filter(|n| n.ends_with(".csv")).count(), 8);
    assert_eq!(names.iter().filter(|n| n.ends_with(".txt")).count(), 1);
    let r = report(&out.path().join("sweep_report.txt"));
    assert_eq!(r.get("compare.gfl_to_gfm.full_smallest"), Some("true"));
    assert_eq!(r.get("compare.gfl_to_gfm.partials_between"), Some("true"));
}

#[test]
fn basin_writes_csv() {
    let out = tempfile::tempdir().unwrap();
    let dir = out.path().to_str().unwrap();
    let cfg = default_config();
    let code = run(&[
        "basin",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir,
        "--override",
        "basin.axes=[{ state = \"v_cd\", half_width = 0.05, points = 3 }]",
    ]);
    assert_eq!(code, 0);
    let csv = fs::read_to_string(out.path().join("basin.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("d_v_cd,class,settle_time"));
    assert_eq!(csv.lines().filter(|l| l.contains(",converged,")).count(), 3);
}

#[test]
fn equilibrium_succeeds() {
    let out = tempfile::tempdir().unwrap();
    assert_eq!(
        run(&["equilibrium", "--config", default_config().to_str().unwrap(), "--out", out.path().to_str().unwrap()]),
        0
    );
}

#[test]
fn exit_status_classes() {
    let out = tempfile::tempdir().unwrap();
    let dir = out.path().to_str().unwrap();
    let cfg = default_config();
    let cfg = cfg.to_str().unwrap();
    assert_eq!(run(&["run", "--config", "/nonexistent.toml"]), 1);
    assert_eq!(run(&["run", "--config", cfg, "--out", dir, "--override", "plant.l_f=\"-5 mH\""]), 1);
    assert_eq!(run(&["run", "--config", cfg, "--out", dir, "--override", "plant.bogus=1"]), 1);
    assert_eq!(run(&["frobnicate", "--config", cfg]), 1);
    // a current loop too weak to damp the filter resonance blows up the GFM run
    assert_eq!(run(&["run", "--config", cfg, "--out", dir, "--override", "control.current.kp=0.1"]), 2);
    let r = report(&out.path().join("report.txt"));
    assert_eq!(r.get("scenario.gfm_to_gfl_full.status"), Some("diverged"));
    assert_eq!(r.get("scenario.gfm_to_gfl_full.pass"), Some("false"));
    assert!(out.path().join("gfm_to_gfl_full.csv").exists());
}
