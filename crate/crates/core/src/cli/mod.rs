//! Command-line configuration, reports and entry points.
//!
//! Subcommands:
//!
//! * `run`: every configured scenario; one CSV per scenario plus `report.txt`
//! * `equilibrium`: operating points of both modes and the mapping between them
//! * `basin`: a grid of perturbed starts around an equilibrium, as `basin.csv`
//! * `sweep`: the four mapping ablations in both directions, plus
//!   `sweep_report.txt`
//!
//! Exit status is 0 on success, 1 for invalid input and 2 for numerical
//! failure.

mod config;
mod report;

use std::ffi::OsString;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

pub use config::{
    apply_override, parse_config, parse_config_with_overrides, parse_quantity, BasinAxisConfig, BasinConfig, Dim,
    EquilibriumConfig, RefInput, RunConfig, ScenarioConfig, SweepConfig, DEFAULT_GRID_CURRENT, DEFAULT_THRESHOLD,
    DEFAULT_WINDOW,
};
pub use report::{equilibrium_entries, mapping_entries, metrics_entries, Report};

use crate::equilibrium::{component_names, find_equilibrium, matching_gfm_refs, probe_basin, BasinAxis, BasinClass, BasinOptions};
use crate::error::{Error, Result};
use crate::mapping::MappingFlags;
use crate::modes::{Mode, Refs};
use crate::sim::{run_batch, run_scenario, scenario_metrics, Scenario, Trace};
use crate::SystemParams;

#[derive(Debug, Parser)]
#[command(name = "modeswitch", version, about = "GFL/GFM mode-switching simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the configured scenarios and write traces and a report.
    Run(CommonArgs),
    /// Print the GFL and GFM operating points and the mapping between them.
    Equilibrium(CommonArgs),
    /// Sample the basin of attraction around an equilibrium.
    Basin(CommonArgs),
    /// Run the mapping ablations in both directions.
    Sweep(CommonArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory [default: the config's `output_dir`, else ./out]
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// `dotted.path=value`, applied before validation. Repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Write a gnuplot script next to each trace.
    #[arg(long)]
    pub gnuplot: bool,
}

impl Command {
    fn common(&self) -> &CommonArgs {
        match self {
            Self::Run(a) | Self::Equilibrium(a) | Self::Basin(a) | Self::Sweep(a) => a,
        }
    }
}

/// What a command produced; `failed` marks a partial numerical failure
/// that still let the command write its outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub report: Report,
    pub failed: bool,
}

pub fn exit_code(result: &Result<Outcome>) -> i32 {
    match result {
        Ok(o) if !o.failed => 0,
        Ok(_) => 2,
        Err(e) if e.is_numerical() => 2,
        Err(_) => 1,
    }
}

/// Parses `args` (including the program name), runs the command, prints
/// diagnostics to stderr, and returns the exit status.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let result = execute(&cli.command);
    if let Err(e) = &result {
        eprintln!("error: {e}");
    }
    exit_code(&result)
}

pub fn load_config(path: &Path, overrides: &[String]) -> Result<RunConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::invalid("--config", format!("{}: {e}", path.display())))?;
    parse_config_with_overrides(&text, overrides)
}

pub fn execute(cmd: &Command) -> Result<Outcome> {
    let args = cmd.common();
    let mut cfg = load_config(&args.config, &args.overrides)?;
    if let Some(out) = &args.out {
        cfg.output_dir = out.clone();
    }
    cfg.gnuplot |= args.gnuplot;
    let outcome = match cmd {
        Command::Run(_) => run_command(&cfg)?,
        Command::Equilibrium(_) => equilibrium_command(&cfg)?,
        Command::Basin(_) => basin_command(&cfg)?,
        Command::Sweep(_) => sweep_command(&cfg)?,
    };
    Ok(outcome)
}

fn create_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::invalid("--out", format!("{}: {e}", dir.display())))
}

fn write_trace(dir: &Path, trace: &Trace, gnuplot: bool) -> Result<()> {
    let csv = dir.join(format!("{}.csv", trace.name));
    let mut w = BufWriter::new(fs::File::create(&csv)?);
    trace.write_csv(&mut w)?;
    w.flush()?;
    if gnuplot {
        fs::write(dir.join(format!("{}.gp", trace.name)), gnuplot_script(&trace.name))?;
    }
    Ok(())
}

/// A standalone gnuplot script rendering `<name>.csv` to `<name>.png`.
pub fn gnuplot_script(name: &str) -> String {
    format!(
        "set datafile separator ','\n\
         set key autotitle columnhead\n\
         set terminal pngcairo size 1000,1000\n\
         set output '{name}.png'\n\
         set multiplot layout 4,1 title '{name}'\n\
         set xlabel 't [s]'\n\
         set ylabel 'v_c [pu]'\n\
         plot '{name}.csv' using 1:8 with lines, '' using 1:9 with lines\n\
         set ylabel 'i_g [pu]'\n\
         plot '{name}.csv' using 1:10 with lines, '' using 1:11 with lines\n\
         set ylabel 'p, q [pu]'\n\
         plot '{name}.csv' using 1:16 with lines, '' using 1:17 with lines\n\
         set ylabel 'v_i cmd [pu]'\n\
         plot '{name}.csv' using 1:18 with lines, '' using 1:19 with lines\n\
         unset multiplot\n"
    )
}

/// Summarizes a finished trace: status, metrics, mapping echo and pass flag.
fn trace_entries(prefix: &str, trace: &Trace, window: f64, threshold: f64) -> Result<Report> {
    let mut r = Report::new();
    r.push(format!("{prefix}.status"), "ok");
    r.push(format!("{prefix}.samples"), trace.len());
    if let Some(sw) = &trace.switch {
        r.push(format!("{prefix}.switch.t"), sw.t);
        r.push(format!("{prefix}.switch.from"), sw.from);
        r.push(format!("{prefix}.switch.to"), sw.to);
        r.push(format!("{prefix}.switch.flags"), sw.flags.label());
        r.extend(mapping_entries(&format!("{prefix}.mapping.full"), &sw.full));
        r.extend(mapping_entries(&format!("{prefix}.mapping.applied"), &sw.applied));
    }
    let m = scenario_metrics(trace, window)?;
    r.extend(metrics_entries(&format!("{prefix}.metrics"), &m));
    let dev = m.max_plant_deviation();
    r.push(format!("{prefix}.threshold"), threshold);
    r.push(format!("{prefix}.pass"), dev < threshold);
    Ok(r)
}

/// Records a failed scenario; writes the recorded prefix of a diverged run.
fn failure_entries(prefix: &str, err: &Error, dir: &Path, gnuplot: bool) -> Result<Report> {
    let mut r = Report::new();
    let status = match err {
        Error::Diverged { .. } => "diverged",
        e if e.is_numerical() => "numerical_failure",
        _ => "invalid",
    };
    r.push(format!("{prefix}.status"), status);
    r.push(format!("{prefix}.error"), err.to_string().replace('\n', " "));
    if let Error::Diverged {
        trace_prefix: Some(tr), ..
    } = err
    {
        write_trace(dir, tr, gnuplot)?;
        r.push(format!("{prefix}.samples"), tr.len());
    }
    r.push(format!("{prefix}.pass"), false);
    Ok(r)
}

pub fn run_command(cfg: &RunConfig) -> Result<Outcome> {
    create_out(&cfg.output_dir)?;
    let params = &cfg.params;
    let scenarios = cfg
        .scenarios
        .iter()
        .map(|s| s.to_scenario(params, cfg.decimation))
        .collect::<Result<Vec<_>>>()?;
    let results = run_batch(&scenarios, params, cfg.parallel);

    let mut report = Report::new();
    report.push("scenarios", scenarios.len());
    let mut failed = false;
    for ((sc, sc_cfg), res) in scenarios.iter().zip(&cfg.scenarios).zip(results) {
        let prefix = format!("scenario.{}", sc.name);
        let threshold = sc_cfg.threshold.unwrap_or(cfg.threshold);
        match find_equilibrium(&sc.initial_refs, params) {
            Ok(eq) => report.extend(equilibrium_entries(&format!("{prefix}.initial_equilibrium"), &eq, params)),
            Err(e) => report.push(format!("{prefix}.initial_equilibrium.error"), e),
        }
        let entries = match res {
            Ok(trace) => {
                write_trace(&cfg.output_dir, &trace, cfg.gnuplot)?;
                let e = trace_entries(&prefix, &trace, cfg.window, threshold)?;
                println!(
                    "{}: ok, max plant deviation {} pu, pass {}",
                    sc.name,
                    e.get(&format!("{prefix}.metrics.max_plant_deviation")).unwrap_or("?"),
                    e.get(&format!("{prefix}.pass")).unwrap_or("?"),
                );
                e
            }
            Err(err) => {
                failed |= err.is_numerical();
                eprintln!("{}: {err}", sc.name);
                failure_entries(&prefix, &err, &cfg.output_dir, cfg.gnuplot)?
            }
        };
        report.extend(entries);
    }
    fs::write(cfg.output_dir.join("report.txt"), report.to_text())?;
    Ok(Outcome { report, failed })
}

/// Mapping echo at the GFL operating point: a short GFL→GFM switch.
fn mapping_at(refs: Refs, params: &SystemParams) -> Result<crate::sim::SwitchRecord> {
    let mut sc = Scenario::switch("mapping", Mode::Gfl, refs, MappingFlags::FULL, 0.01, 0.02);
    sc.decimation = 100;
    let tr = run_scenario(&sc, params)?;
    Ok(tr.switch.expect("a switch scenario records its switch"))
}

pub fn equilibrium_command(cfg: &RunConfig) -> Result<Outcome> {
    let params = &cfg.params;
    let gfl_refs = cfg.equilibrium.gfl_refs.resolve(params)?;
    let gfl = find_equilibrium(&gfl_refs, params)?;
    let gfm = find_equilibrium(&Refs::Gfm(matching_gfm_refs(&gfl)), params)?;
    let sw = mapping_at(gfl_refs, params)?;
    let mut report = Report::new();
    report.extend(equilibrium_entries("gfl", &gfl, params));
    report.extend(equilibrium_entries("gfm", &gfm, params));
    report.extend(mapping_entries("mapping.gfl_to_gfm", &sw.full));
    print!("{}", report.to_text());
    Ok(Outcome { report, failed: false })
}

fn linspace(half_width: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..n).map(|k| -half_width + 2.0 * half_width * k as f64 / (n - 1) as f64).collect(),
    }
}

pub fn basin_command(cfg: &RunConfig) -> Result<Outcome> {
    create_out(&cfg.output_dir)?;
    let params = &cfg.params;
    let b = &cfg.basin;
    let refs = b.refs.resolve(params)?;
    let eq = find_equilibrium(&refs, params)?;
    let mode = eq.mode();
    let axes = b
        .axes
        .iter()
        .enumerate()
        .map(|(k, a)| {
            if a.points == 0 {
                return Err(Error::invalid(format!("basin.axes.{k}.points"), "must be at least 1"));
            }
            BasinAxis::named(mode, &a.state, linspace(a.half_width, a.points)).map_err(|_| {
                Error::invalid(
                    format!("basin.axes.{k}.state"),
                    format!("`{}` is not a {mode} state; expected one of {:?}", a.state, component_names(mode)),
                )
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let opts = BasinOptions {
        t_max: b.t_max,
        tol: b.tol,
        dt: b.dt,
        parallel: cfg.parallel,
        ..BasinOptions::default()
    };
    let map = probe_basin(&eq, params, &axes, &opts)?;
    let mut w = BufWriter::new(fs::File::create(cfg.output_dir.join("basin.csv"))?);
    map.write_csv(&mut w)?;
    w.flush()?;

    let mut report = Report::new();
    report.push("basin.mode", mode);
    report.push("basin.points", map.points.len());
    for class in [BasinClass::Converged, BasinClass::Diverged, BasinClass::Undecided] {
        report.push(format!("basin.{class}"), map.count(class));
    }
    print!("{}", report.to_text());
    Ok(Outcome { report, failed: false })
}

const SWEEP_FLAGS: [MappingFlags; 4] = [
    MappingFlags::FULL,
    MappingFlags::SYNC_ONLY,
    MappingFlags::AMPLITUDE_ONLY,
    MappingFlags::NONE,
];

/// The eight ablation scenarios: four flag sets per direction.
pub fn sweep_scenarios(cfg: &RunConfig) -> Result<Vec<Scenario>> {
    let s = &cfg.sweep;
    let params = &cfg.params;
    let gfl = RefInput::GridCurrent(s.grid_current).resolve(params)?;
    let gfm = RefInput::MatchGridCurrent(s.grid_current).resolve(params)?;
    let mut out = Vec::with_capacity(8);
    for (from, refs) in [(Mode::Gfl, gfl), (Mode::Gfm, gfm)] {
        for flags in SWEEP_FLAGS {
            let name = format!("sweep_{}_to_{}_{}", mode_key(from), mode_key(from.other()), flags.label());
            let mut sc = Scenario::switch(name, from, refs, flags, s.t_switch, s.duration);
            sc.dt = s.dt;
            sc.decimation = cfg.decimation;
            out.push(sc);
        }
    }
    Ok(out)
}

fn mode_key(m: Mode) -> &'static str {
    match m {
        Mode::Gfl => "gfl",
        Mode::Gfm => "gfm",
    }
}

pub fn sweep_command(cfg: &RunConfig) -> Result<Outcome> {
    create_out(&cfg.output_dir)?;
    let scenarios = sweep_scenarios(cfg)?;
    let results = run_batch(&scenarios, &cfg.params, cfg.parallel);
    let mut report = Report::new();
    let mut failed = false;
    let mut deviations = Vec::new();
    for (sc, res) in scenarios.iter().zip(results) {
        let prefix = format!("scenario.{}", sc.name);
        match res {
            Ok(trace) => {
                write_trace(&cfg.output_dir, &trace, cfg.gnuplot)?;
                let e = trace_entries(&prefix, &trace, cfg.window, cfg.threshold)?;
                let dev: f64 = e
                    .get(&format!("{prefix}.metrics.max_plant_deviation"))
                    .and_then(|v| v.parse().ok())
                    .unwrap_or(f64::NAN);
                deviations.push((sc.initial_mode, sc.flags, dev));
                report.extend(e);
            }
            Err(err) => {
                failed |= err.is_numerical();
                deviations.push((sc.initial_mode, sc.flags, f64::INFINITY));
                report.extend(failure_entries(&prefix, &err, &cfg.output_dir, cfg.gnuplot)?);
            }
        }
    }
    for from in [Mode::Gfl, Mode::Gfm] {
        let key = format!("compare.{}_to_{}", mode_key(from), mode_key(from.other()));
        let dev = |flags: MappingFlags| {
            deviations
                .iter()
                .find(|(m, f, _)| *m == from && *f == flags)
                .map(|(_, _, d)| *d)
                .unwrap_or(f64::NAN)
        };
        for flags in SWEEP_FLAGS {
            let d = dev(flags);
            report.push(format!("{key}.{}.max_plant_deviation", flags.label()), d);
            println!("{key} {:<15} max plant deviation {d:.3e} pu", flags.label());
        }
        let (full, sync, amp, none) = (
            dev(MappingFlags::FULL),
            dev(MappingFlags::SYNC_ONLY),
            dev(MappingFlags::AMPLITUDE_ONLY),
            dev(MappingFlags::NONE),
        );
        report.push(format!("{key}.full_smallest"), full < sync.min(amp).min(none));
        report.push(format!("{key}.partials_between"), sync.max(amp) < none && full < sync.min(amp));
    }
    fs::write(cfg.output_dir.join("sweep_report.txt"), report.to_text())?;
    Ok(Outcome { report, failed })
}
