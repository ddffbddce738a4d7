//! Run configuration: a TOML document with optional unit suffixes.
//!
//! Numbers are SI. Strings carry a unit, e.g. `"5 mH"`, `"30 uF"`,
//! `"0.4 ohm"`, `"10 us"`, `"50 Hz"` (converted to rad/s) or `"0.02 pu"`
//! (scaled by the per-unit bases). Unknown keys are rejected and every error
//! names the offending path.

use std::f64::consts::PI;
use std::path::PathBuf;

use toml::{Table, Value};

use crate::control::{ControlParams, DroopParams, PiGains};
use crate::equilibrium::{current_reference_for_grid_current, find_equilibrium, matching_gfm_refs};
use crate::error::{Error, Result};
use crate::frames::{DqPair, PerUnitBase};
use crate::mapping::MappingFlags;
use crate::modes::{GflRefs, GfmRefs, Mode, Refs};
use crate::plant::PlantParams;
use crate::sim::{Ordering, Scenario, SetpointChange, DEFAULT_DECIMATION, DEFAULT_DT};
use crate::SystemParams;

/// Physical dimension of a configuration value, deciding which unit
/// suffixes it accepts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dim {
    Voltage,
    Current,
    Resistance,
    Inductance,
    Capacitance,
    Power,
    AngularFrequency,
    Time,
    /// Droop slope in rad/s per pu of power; `pu` scales by the frequency
    /// base.
    DroopSlope,
    Dimensionless,
}

/// Scales to SI for `unit` in dimension `dim`. `None` if the unit does not
/// belong to the dimension, or is `pu` and no bases are available.
fn unit_scale(dim: Dim, unit: &str, base: Option<&PerUnitBase>) -> Option<f64> {
    let pu = |f: fn(&PerUnitBase) -> f64| base.map(f);
    match (dim, unit) {
        (_, "") => Some(1.0),
        (Dim::Voltage, "V") => Some(1.0),
        (Dim::Voltage, "kV") => Some(1e3),
        (Dim::Voltage, "mV") => Some(1e-3),
        (Dim::Voltage, "pu") => pu(|b| b.v_base),
        (Dim::Current, "A") => Some(1.0),
        (Dim::Current, "kA") => Some(1e3),
        (Dim::Current, "mA") => Some(1e-3),
        (Dim::Current, "pu") => pu(|b| b.i_base),
        (Dim::Resistance, "ohm" | "Ω") => Some(1.0),
        (Dim::Resistance, "mohm" | "mΩ") => Some(1e-3),
        (Dim::Resistance, "kohm" | "kΩ") => Some(1e3),
        (Dim::Resistance, "pu") => pu(|b| b.z_base),
        (Dim::Inductance, "H") => Some(1.0),
        (Dim::Inductance, "mH") => Some(1e-3),
        (Dim::Inductance, "uH" | "µH") => Some(1e-6),
        (Dim::Inductance, "pu") => pu(|b| b.z_base / b.omega_base),
        (Dim::Capacitance, "F") => Some(1.0),
        (Dim::Capacitance, "mF") => Some(1e-3),
        (Dim::Capacitance, "uF" | "µF") => Some(1e-6),
        (Dim::Capacitance, "nF") => Some(1e-9),
        (Dim::Capacitance, "pu") => pu(|b| 1.0 / (b.z_base * b.omega_base)),
        (Dim::Power, "W") => Some(1.0),
        (Dim::Power, "kW") => Some(1e3),
        (Dim::Power, "MW") => Some(1e6),
        (Dim::Power, "pu") => pu(|b| b.s_base),
        (Dim::AngularFrequency, "rad/s") => Some(1.0),
        (Dim::AngularFrequency, "Hz") => Some(2.0 * PI),
        (Dim::AngularFrequency, "kHz") => Some(2e3 * PI),
        (Dim::AngularFrequency, "pu") => pu(|b| b.omega_base),
        (Dim::Time, "s") => Some(1.0),
        (Dim::Time, "ms") => Some(1e-3),
        (Dim::Time, "us" | "µs") => Some(1e-6),
        (Dim::DroopSlope, "rad/s") => Some(1.0),
        (Dim::DroopSlope, "pu") => pu(|b| b.omega_base),
        (Dim::Dimensionless, "pu") => Some(1.0),
        _ => None,
    }
}

/// Parses `"<number> <unit>"` (the space is optional) into SI.
pub fn parse_quantity(text: &str, dim: Dim, base: Option<&PerUnitBase>) -> std::result::Result<f64, String> {
    let text = text.trim();
    let split = text
        .char_indices()
        .rev()
        .take_while(|(_, c)| c.is_alphabetic() || *c == '/' || *c == 'Ω')
        .last()
        .map(|(i, _)| i)
        .unwrap_or(text.len());
    let (num, unit) = text.split_at(split);
    let value: f64 = num
        .trim()
        .parse()
        .map_err(|_| format!("`{text}` is not a number with an optional unit"))?;
    let unit = unit.trim();
    let scale = unit_scale(dim, unit, base).ok_or_else(|| {
        if unit == "pu" {
            "per-unit values are not allowed here".to_string()
        } else {
            format!("unit `{unit}` does not fit a {dim:?} value")
        }
    })?;
    // divide by the exact reciprocal of sub-unit prefixes: 30 / 1e6 is 3e-5
    // exactly, 30 * 1e-6 is not
    let inv = (1.0 / scale).round();
    if scale < 1.0 && (inv * scale - 1.0).abs() < 1e-12 {
        Ok(value / inv)
    } else {
        Ok(value * scale)
    }
}

/// How a scenario's references are given.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RefInput {
    /// GFL: inverter-side current reference, pu.
    Current(DqPair),
    /// GFL: the current reference that yields this d-axis grid current, pu.
    GridCurrent(f64),
    /// GFM: voltage and power references, pu.
    Voltage { v_ref: DqPair, p_ref: f64 },
    /// GFM: the operating point of a GFL equilibrium delivering this grid
    /// current.
    MatchGridCurrent(f64),
}

impl RefInput {
    pub fn mode(&self) -> Mode {
        match self {
            Self::Current(_) | Self::GridCurrent(_) => Mode::Gfl,
            Self::Voltage { .. } | Self::MatchGridCurrent(_) => Mode::Gfm,
        }
    }

    pub fn resolve(&self, params: &SystemParams) -> Result<Refs> {
        Ok(match *self {
            Self::Current(i_ref) => Refs::Gfl(GflRefs { i_ref }),
            Self::GridCurrent(i) => Refs::Gfl(current_reference_for_grid_current(i, params)),
            Self::Voltage { v_ref, p_ref } => Refs::Gfm(GfmRefs { v_ref, p_ref }),
            Self::MatchGridCurrent(i) => {
                let gfl = find_equilibrium(&Refs::Gfl(current_reference_for_grid_current(i, params)), params)?;
                Refs::Gfm(matching_gfm_refs(&gfl))
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub name: String,
    pub initial_mode: Mode,
    pub target_mode: Option<Mode>,
    pub t_switch: f64,
    pub duration: f64,
    pub dt: f64,
    pub decimation: Option<usize>,
    pub flags: MappingFlags,
    pub initial_refs: RefInput,
    pub target_refs: Option<RefInput>,
    pub schedule: Vec<(f64, RefInput)>,
    pub ordering: Ordering,
    /// Pass bound on the post-switch plant deviation, pu.
    pub threshold: Option<f64>,
}

impl ScenarioConfig {
    pub fn to_scenario(&self, params: &SystemParams, default_decimation: usize) -> Result<Scenario> {
        let schedule = self
            .schedule
            .iter()
            .map(|(t, r)| Ok(SetpointChange { t: *t, refs: r.resolve(params)? }))
            .collect::<Result<Vec<_>>>()?;
        Ok(Scenario {
            name: self.name.clone(),
            initial_mode: self.initial_mode,
            target_mode: self.target_mode,
            t_switch: self.t_switch,
            duration: self.duration,
            dt: self.dt,
            decimation: self.decimation.unwrap_or(default_decimation),
            flags: self.flags,
            initial_refs: self.initial_refs.resolve(params)?,
            target_refs: self.target_refs.map(|r| r.resolve(params)).transpose()?,
            schedule,
            ordering: self.ordering,
            initial_state: None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumConfig {
    /// GFL operating point; the GFM one is matched to it.
    pub gfl_refs: RefInput,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BasinAxisConfig {
    pub state: String,
    pub half_width: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BasinConfig {
    pub refs: RefInput,
    pub axes: Vec<BasinAxisConfig>,
    pub t_max: f64,
    pub tol: f64,
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    /// Operating point of both directions, as a GFL grid current, pu.
    pub grid_current: f64,
    pub t_switch: f64,
    pub duration: f64,
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub params: SystemParams,
    pub output_dir: PathBuf,
    pub decimation: usize,
    pub parallel: bool,
    /// Also write a gnuplot script next to each trace.
    pub gnuplot: bool,
    /// Post-switch observation window, s.
    pub window: f64,
    /// Default pass bound on the post-switch plant deviation, pu.
    pub threshold: f64,
    pub scenarios: Vec<ScenarioConfig>,
    pub equilibrium: EquilibriumConfig,
    pub basin: BasinConfig,
    pub sweep: SweepConfig,
}

pub const DEFAULT_GRID_CURRENT: f64 = 0.51;
pub const DEFAULT_WINDOW: f64 = 0.2;
pub const DEFAULT_THRESHOLD: f64 = 1e-3;

fn default_scenario() -> ScenarioConfig {
    ScenarioConfig {
        name: "gfl_to_gfm_full".into(),
        initial_mode: Mode::Gfl,
        target_mode: Some(Mode::Gfm),
        t_switch: 0.1,
        duration: 0.4,
        dt: DEFAULT_DT,
        decimation: None,
        flags: MappingFlags::FULL,
        initial_refs: RefInput::GridCurrent(DEFAULT_GRID_CURRENT),
        target_refs: None,
        schedule: Vec::new(),
        ordering: Ordering::None,
        threshold: None,
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            params: SystemParams::default(),
            output_dir: PathBuf::from("out"),
            decimation: DEFAULT_DECIMATION,
            parallel: true,
            gnuplot: false,
            window: DEFAULT_WINDOW,
            threshold: DEFAULT_THRESHOLD,
            scenarios: vec![default_scenario()],
            equilibrium: EquilibriumConfig {
                gfl_refs: RefInput::GridCurrent(DEFAULT_GRID_CURRENT),
            },
            basin: BasinConfig {
                refs: RefInput::GridCurrent(DEFAULT_GRID_CURRENT),
                axes: vec![
                    BasinAxisConfig {
                        state: "delta".into(),
                        half_width: 1.0,
                        points: 9,
                    },
                    BasinAxisConfig {
                        state: "i_gd".into(),
                        half_width: 0.2,
                        points: 5,
                    },
                ],
                t_max: 1.0,
                tol: 1e-4,
                dt: DEFAULT_DT,
            },
            sweep: SweepConfig {
                grid_current: DEFAULT_GRID_CURRENT,
                t_switch: 0.1,
                duration: 0.4,
                dt: DEFAULT_DT,
            },
        }
    }
}

/// A table being consumed key by key; leftovers are unknown keys.
struct Node {
    path: String,
    table: Table,
}

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

fn type_err(path: &str, what: &str, v: &Value) -> Error {
    Error::invalid(path, format!("expected {what}, found {}", v.type_str()))
}

impl Node {
    fn new(path: String, v: Value) -> Result<Self> {
        match v {
            Value::Table(table) => Ok(Self { path, table }),
            other => Err(type_err(&path, "a table", &other)),
        }
    }

    fn take(&mut self, key: &str) -> Option<(String, Value)> {
        self.table.remove(key).map(|v| (join(&self.path, key), v))
    }

    fn child(&mut self, key: &str) -> Result<Option<Node>> {
        self.take(key).map(|(p, v)| Node::new(p, v)).transpose()
    }

    fn quantity(&mut self, key: &str, dim: Dim, base: Option<&PerUnitBase>) -> Result<Option<f64>> {
        self.take(key).map(|(p, v)| quantity(&p, &v, dim, base)).transpose()
    }

    fn boolean(&mut self, key: &str) -> Result<Option<bool>> {
        self.take(key)
            .map(|(p, v)| v.as_bool().ok_or_else(|| type_err(&p, "a boolean", &v)))
            .transpose()
    }

    fn string(&mut self, key: &str) -> Result<Option<(String, String)>> {
        self.take(key)
            .map(|(p, v)| match v {
                Value::String(s) => Ok((p, s)),
                other => Err(type_err(&p, "a string", &other)),
            })
            .transpose()
    }

    fn count(&mut self, key: &str) -> Result<Option<usize>> {
        self.take(key)
            .map(|(p, v)| match v {
                Value::Integer(i) if i >= 0 => Ok(i as usize),
                other => Err(type_err(&p, "a non-negative integer", &other)),
            })
            .transpose()
    }

    fn dq(&mut self, key: &str) -> Result<Option<DqPair>> {
        self.take(key).map(|(p, v)| dq(&p, &v)).transpose()
    }

    fn array(&mut self, key: &str) -> Result<Option<Vec<(String, Value)>>> {
        self.take(key)
            .map(|(p, v)| match v {
                Value::Array(items) => Ok(items.into_iter().enumerate().map(|(i, x)| (format!("{p}.{i}"), x)).collect()),
                other => Err(type_err(&p, "an array", &other)),
            })
            .transpose()
    }

    fn finish(self) -> Result<()> {
        match self.table.keys().next() {
            Some(k) => Err(Error::invalid(join(&self.path, k), "unknown key")),
            None => Ok(()),
        }
    }
}

fn quantity(path: &str, v: &Value, dim: Dim, base: Option<&PerUnitBase>) -> Result<f64> {
    let x = match v {
        Value::Float(x) => *x,
        Value::Integer(i) => *i as f64,
        Value::String(s) => parse_quantity(s, dim, base).map_err(|e| Error::invalid(path, e))?,
        other => return Err(type_err(path, "a number or a string with a unit", other)),
    };
    if !x.is_finite() {
        return Err(Error::invalid(path, "must be finite"));
    }
    Ok(x)
}

fn dq(path: &str, v: &Value) -> Result<DqPair> {
    match v {
        Value::Array(a) if a.len() == 2 => Ok(DqPair::new(
            quantity(&format!("{path}.0"), &a[0], Dim::Dimensionless, None)?,
            quantity(&format!("{path}.1"), &a[1], Dim::Dimensionless, None)?,
        )),
        other => Err(type_err(path, "a [d, q] pair", other)),
    }
}

fn positive(path: &str, x: f64) -> Result<f64> {
    if x > 0.0 {
        Ok(x)
    } else {
        Err(Error::invalid(path, format!("must be > 0, got {x}")))
    }
}

fn parse_base(node: Option<Node>) -> Result<PerUnitBase> {
    let d = PerUnitBase::default();
    let Some(mut n) = node else { return Ok(d) };
    let s = n.quantity("s_base", Dim::Power, None)?.unwrap_or(d.s_base);
    let v = n.quantity("v_base", Dim::Voltage, None)?.unwrap_or(d.v_base);
    let w = n.quantity("omega_base", Dim::AngularFrequency, None)?.unwrap_or(d.omega_base);
    let path = n.path.clone();
    n.finish()?;
    PerUnitBase::new(s, v, w).map_err(|e| match e {
        Error::Invalid { path: p, reason } => Error::invalid(join(&path, &p), reason),
        e => e,
    })
}

fn parse_plant(node: Option<Node>, base: &PerUnitBase) -> Result<PlantParams> {
    let mut p = PlantParams::default();
    let Some(mut n) = node else { return Ok(p) };
    let b = Some(base);
    let fields: [(&str, Dim, &mut f64); 7] = [
        ("l_f", Dim::Inductance, &mut p.l_f),
        ("r_f", Dim::Resistance, &mut p.r_f),
        ("c_f", Dim::Capacitance, &mut p.c_f),
        ("l_g", Dim::Inductance, &mut p.l_g),
        ("r_g", Dim::Resistance, &mut p.r_g),
        ("v_g", Dim::Voltage, &mut p.v_g_amp),
        ("omega_g", Dim::AngularFrequency, &mut p.omega_g),
    ];
    for (key, dim, slot) in fields {
        if let Some(x) = n.quantity(key, dim, b)? {
            *slot = x;
        }
    }
    n.finish()?;
    Ok(p)
}

fn parse_gains(node: Option<Node>, default: PiGains) -> Result<PiGains> {
    let Some(mut n) = node else { return Ok(default) };
    let kp = n.quantity("kp", Dim::Dimensionless, None)?.unwrap_or(default.kp);
    let ki = n.quantity("ki", Dim::Dimensionless, None)?.unwrap_or(default.ki);
    n.finish()?;
    Ok(PiGains::new(kp, ki))
}

fn parse_control(node: Option<Node>, base: &PerUnitBase) -> Result<ControlParams> {
    let d = ControlParams::default();
    let Some(mut n) = node else { return Ok(d) };
    let b = Some(base);
    let omega_ref = n.quantity("omega_ref", Dim::AngularFrequency, b)?.unwrap_or(d.omega_ref);
    let pll = parse_gains(n.child("pll")?, d.pll)?;
    let cur = parse_gains(n.child("current")?, d.cur)?;
    let volt = parse_gains(n.child("voltage")?, d.volt)?;
    let droop = match n.child("droop")? {
        None => d.droop,
        Some(mut dn) => {
            let m_p = dn.quantity("m_p", Dim::DroopSlope, b)?.unwrap_or(d.droop.m_p);
            let lpf_cutoff = dn.quantity("lpf_cutoff", Dim::AngularFrequency, b)?.unwrap_or(d.droop.lpf_cutoff);
            dn.finish()?;
            DroopParams { m_p, lpf_cutoff }
        }
    };
    n.finish()?;
    Ok(ControlParams {
        pll,
        cur,
        volt,
        droop,
        omega_ref,
    })
}

fn parse_mode(path: &str, s: &str) -> Result<Mode> {
    s.parse::<Mode>().map_err(|_| Error::invalid(path, format!("expected `gfl` or `gfm`, got `{s}`")))
}

fn parse_refs(path: String, v: Value) -> Result<RefInput> {
    let mut n = Node::new(path.clone(), v)?;
    let i_ref = n.dq("i_ref")?;
    let grid_current = n.quantity("grid_current", Dim::Dimensionless, None)?;
    let v_ref = n.dq("v_ref")?;
    let p_ref = n.quantity("p_ref", Dim::Dimensionless, None)?;
    let matched = n.quantity("match_grid_current", Dim::Dimensionless, None)?;
    n.finish()?;
    match (i_ref, grid_current, v_ref, p_ref, matched) {
        (Some(i), None, None, None, None) => Ok(RefInput::Current(i)),
        (None, Some(i), None, None, None) => Ok(RefInput::GridCurrent(i)),
        (None, None, Some(v_ref), Some(p_ref), None) => Ok(RefInput::Voltage { v_ref, p_ref }),
        (None, None, None, None, Some(i)) => Ok(RefInput::MatchGridCurrent(i)),
        _ => Err(Error::invalid(
            path,
            "give exactly one of `i_ref`, `grid_current`, `v_ref` with `p_ref`, or `match_grid_current`",
        )),
    }
}

fn parse_flags(node: Option<Node>) -> Result<MappingFlags> {
    let Some(mut n) = node else { return Ok(MappingFlags::FULL) };
    let flags = MappingFlags {
        use_sync: n.boolean("use_sync")?.unwrap_or(false),
        use_amplitude: n.boolean("use_amplitude")?.unwrap_or(false),
        use_full_mapping: n.boolean("use_full_mapping")?.unwrap_or(false),
    };
    n.finish()?;
    Ok(flags)
}

fn parse_ordering(path: &str, s: &str) -> Result<Ordering> {
    match s {
        "none" => Ok(Ordering::None),
        "setpoint-before-switch" => Ok(Ordering::SetpointBeforeSwitch),
        "setpoint-after-switch" => Ok(Ordering::SetpointAfterSwitch),
        other => Err(Error::invalid(
            path,
            format!("expected none, setpoint-before-switch or setpoint-after-switch, got `{other}`"),
        )),
    }
}

fn ordering_str(o: Ordering) -> &'static str {
    match o {
        Ordering::None => "none",
        Ordering::SetpointBeforeSwitch => "setpoint-before-switch",
        Ordering::SetpointAfterSwitch => "setpoint-after-switch",
    }
}

fn parse_scenario(path: String, v: Value) -> Result<ScenarioConfig> {
    let mut n = Node::new(path.clone(), v)?;
    let name = match n.string("name")? {
        Some((_, s)) if !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') => s,
        Some((p, s)) => return Err(Error::invalid(p, format!("`{s}` must be non-empty [A-Za-z0-9_-]"))),
        None => return Err(Error::invalid(join(&path, "name"), "required")),
    };
    let initial_mode = match n.string("initial_mode")? {
        Some((p, s)) => parse_mode(&p, &s)?,
        None => return Err(Error::invalid(join(&path, "initial_mode"), "required")),
    };
    let target_mode = n.string("target_mode")?.map(|(p, s)| parse_mode(&p, &s)).transpose()?;
    let t_switch = n.quantity("t_switch", Dim::Time, None)?.unwrap_or(0.1);
    let duration = n.quantity("duration", Dim::Time, None)?.unwrap_or(0.4);
    let dt = n.quantity("dt", Dim::Time, None)?.unwrap_or(DEFAULT_DT);
    let decimation = n.count("decimation")?;
    let flags = parse_flags(n.child("flags")?)?;
    let initial_refs = match n.take("initial_refs") {
        Some((p, v)) => parse_refs(p, v)?,
        None => match initial_mode {
            Mode::Gfl => RefInput::GridCurrent(DEFAULT_GRID_CURRENT),
            Mode::Gfm => RefInput::MatchGridCurrent(DEFAULT_GRID_CURRENT),
        },
    };
    let target_refs = n.take("target_refs").map(|(p, v)| parse_refs(p, v)).transpose()?;
    let mut schedule = Vec::new();
    for (p, item) in n.array("schedule")?.unwrap_or_default() {
        let mut s = Node::new(p.clone(), item)?;
        let t = s
            .quantity("t", Dim::Time, None)?
            .ok_or_else(|| Error::invalid(join(&p, "t"), "required"))?;
        let refs = match s.take("refs") {
            Some((rp, rv)) => parse_refs(rp, rv)?,
            None => return Err(Error::invalid(join(&p, "refs"), "required")),
        };
        s.finish()?;
        schedule.push((t, refs));
    }
    let ordering = match n.string("ordering")? {
        Some((p, s)) => parse_ordering(&p, &s)?,
        None => Ordering::None,
    };
    let threshold = n.quantity("threshold", Dim::Dimensionless, None)?;
    n.finish()?;

    if initial_refs.mode() != initial_mode {
        return Err(Error::invalid(join(&path, "initial_refs"), format!("must be {initial_mode} references")));
    }
    if let (Some(t), Some(m)) = (&target_refs, target_mode) {
        if t.mode() != m {
            return Err(Error::invalid(join(&path, "target_refs"), format!("must be {m} references")));
        }
    }
    Ok(ScenarioConfig {
        name,
        initial_mode,
        target_mode,
        t_switch,
        duration,
        dt,
        decimation,
        flags,
        initial_refs,
        target_refs,
        schedule,
        ordering,
        threshold,
    })
}

fn parse_basin(node: Option<Node>, d: BasinConfig) -> Result<BasinConfig> {
    let Some(mut n) = node else { return Ok(d) };
    let refs = n.take("refs").map(|(p, v)| parse_refs(p, v)).transpose()?.unwrap_or(d.refs);
    let axes = match n.array("axes")? {
        None => d.axes,
        Some(items) => items
            .into_iter()
            .map(|(p, v)| {
                let mut a = Node::new(p.clone(), v)?;
                let state = a
                    .string("state")?
                    .map(|(_, s)| s)
                    .ok_or_else(|| Error::invalid(join(&p, "state"), "required"))?;
                let half_width = a.quantity("half_width", Dim::Dimensionless, None)?.unwrap_or(0.1);
                let points = a.count("points")?.unwrap_or(5);
                a.finish()?;
                Ok(BasinAxisConfig {
                    state,
                    half_width,
                    points,
                })
            })
            .collect::<Result<Vec<_>>>()?,
    };
    let t_max = n.quantity("t_max", Dim::Time, None)?.unwrap_or(d.t_max);
    let tol = n.quantity("tol", Dim::Dimensionless, None)?.unwrap_or(d.tol);
    let dt = n.quantity("dt", Dim::Time, None)?.unwrap_or(d.dt);
    let path = n.path.clone();
    n.finish()?;
    positive(&join(&path, "t_max"), t_max)?;
    positive(&join(&path, "tol"), tol)?;
    positive(&join(&path, "dt"), dt)?;
    Ok(BasinConfig {
        refs,
        axes,
        t_max,
        tol,
        dt,
    })
}

fn parse_sweep(node: Option<Node>, d: SweepConfig) -> Result<SweepConfig> {
    let Some(mut n) = node else { return Ok(d) };
    let c = SweepConfig {
        grid_current: n.quantity("grid_current", Dim::Dimensionless, None)?.unwrap_or(d.grid_current),
        t_switch: n.quantity("t_switch", Dim::Time, None)?.unwrap_or(d.t_switch),
        duration: n.quantity("duration", Dim::Time, None)?.unwrap_or(d.duration),
        dt: n.quantity("dt", Dim::Time, None)?.unwrap_or(d.dt),
    };
    n.finish()?;
    Ok(c)
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let doc: Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
    parse_value(Value::Table(doc), &[])
}

/// As [`parse_config`], with `key=value` overrides applied first.
pub fn parse_config_with_overrides(text: &str, overrides: &[String]) -> Result<RunConfig> {
    let doc: Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
    parse_value(Value::Table(doc), overrides)
}

fn parse_value(mut doc: Value, overrides: &[String]) -> Result<RunConfig> {
    for o in overrides {
        apply_override(&mut doc, o)?;
    }
    let d = RunConfig::default();
    let mut root = Node::new(String::new(), doc)?;
    let base = parse_base(root.child("base")?)?;
    let plant = parse_plant(root.child("plant")?, &base)?;
    let control = parse_control(root.child("control")?, &base)?;
    let params = SystemParams { base, plant, control };
    params.validate()?;

    let output_dir = root.string("output_dir")?.map(|(_, s)| PathBuf::from(s)).unwrap_or(d.output_dir);
    let decimation = root.count("decimation")?.unwrap_or(d.decimation);
    if decimation == 0 {
        return Err(Error::invalid("decimation", "must be at least 1"));
    }
    let parallel = root.boolean("parallel")?.unwrap_or(d.parallel);
    let gnuplot = root.boolean("gnuplot")?.unwrap_or(d.gnuplot);
    let window = positive("window", root.quantity("window", Dim::Time, None)?.unwrap_or(d.window))?;
    let threshold = positive("threshold", root.quantity("threshold", Dim::Dimensionless, None)?.unwrap_or(d.threshold))?;
    let scenarios = match root.array("scenario")? {
        None => d.scenarios,
        Some(items) => items.into_iter().map(|(p, v)| parse_scenario(p, v)).collect::<Result<Vec<_>>>()?,
    };
    let equilibrium = match root.child("equilibrium")? {
        None => d.equilibrium,
        Some(mut n) => {
            let gfl_refs = n.take("refs").map(|(p, v)| parse_refs(p, v)).transpose()?.unwrap_or(d.equilibrium.gfl_refs);
            let path = join(&n.path, "refs");
            n.finish()?;
            if gfl_refs.mode() != Mode::Gfl {
                return Err(Error::invalid(path, "must be GFL references"));
            }
            EquilibriumConfig { gfl_refs }
        }
    };
    let basin = parse_basin(root.child("basin")?, d.basin)?;
    let sweep = parse_sweep(root.child("sweep")?, d.sweep)?;
    root.finish()?;

    let mut names = std::collections::HashSet::new();
    for (k, s) in scenarios.iter().enumerate() {
        if !names.insert(s.name.as_str()) {
            return Err(Error::invalid(format!("scenario.{k}.name"), format!("duplicate name `{}`", s.name)));
        }
    }
    let cfg = RunConfig {
        params,
        output_dir,
        decimation,
        parallel,
        gnuplot,
        window,
        threshold,
        scenarios,
        equilibrium,
        basin,
        sweep,
    };
    cfg.validate_scenarios()?;
    Ok(cfg)
}

impl RunConfig {
    /// Checks every scenario against the simulation invariants, using
    /// placeholder references where resolving would need a solve.
    fn validate_scenarios(&self) -> Result<()> {
        for (k, s) in self.scenarios.iter().enumerate() {
            let placeholder = |r: &RefInput| match r {
                RefInput::GridCurrent(i) => Refs::Gfl(GflRefs { i_ref: DqPair::new(*i, 0.0) }),
                RefInput::MatchGridCurrent(_) => Refs::Gfm(GfmRefs {
                    v_ref: DqPair::new(1.0, 0.0),
                    p_ref: 0.0,
                }),
                RefInput::Current(i_ref) => Refs::Gfl(GflRefs { i_ref: *i_ref }),
                RefInput::Voltage { v_ref, p_ref } => Refs::Gfm(GfmRefs { v_ref: *v_ref, p_ref: *p_ref }),
            };
            let sc = Scenario {
                name: s.name.clone(),
                initial_mode: s.initial_mode,
                target_mode: s.target_mode,
                t_switch: s.t_switch,
                duration: s.duration,
                dt: s.dt,
                decimation: s.decimation.unwrap_or(self.decimation),
                flags: s.flags,
                initial_refs: placeholder(&s.initial_refs),
                target_refs: s.target_refs.as_ref().map(placeholder),
                schedule: s
                    .schedule
                    .iter()
                    .map(|(t, r)| SetpointChange { t: *t, refs: placeholder(r) })
                    .collect(),
                ordering: s.ordering,
                initial_state: None,
            };
            sc.validate().map_err(|e| match e {
                Error::Invalid { path, reason } => {
                    // report by index, matching the document layout
                    let tail = path.splitn(3, '.').nth(2).unwrap_or("").to_string();
                    Error::invalid(join(&format!("scenario.{k}"), &tail), reason)
                }
                e => e,
            })?;
        }
        Ok(())
    }

    /// The configuration as a document that parses back to `self`.
    pub fn to_toml(&self) -> String {
        let mut root = Table::new();
        let f = Value::Float;
        let mut t = Table::new();
        t.insert("s_base".into(), f(self.params.base.s_base));
        t.insert("v_base".into(), f(self.params.base.v_base));
        t.insert("omega_base".into(), f(self.params.base.omega_base));
        root.insert("base".into(), Value::Table(t));
        let p = &self.params.plant;
        let mut t = Table::new();
        for (k, v) in [
            ("l_f", p.l_f),
            ("r_f", p.r_f),
            ("c_f", p.c_f),
            ("l_g", p.l_g),
            ("r_g", p.r_g),
            ("v_g", p.v_g_amp),
            ("omega_g", p.omega_g),
        ] {
            t.insert(k.into(), f(v));
        }
        root.insert("plant".into(), Value::Table(t));
        let c = &self.params.control;
        let gains = |g: &PiGains| {
            let mut t = Table::new();
            t.insert("kp".into(), f(g.kp));
            t.insert("ki".into(), f(g.ki));
            Value::Table(t)
        };
        let mut t = Table::new();
        t.insert("omega_ref".into(), f(c.omega_ref));
        t.insert("pll".into(), gains(&c.pll));
        t.insert("current".into(), gains(&c.cur));
        t.insert("voltage".into(), gains(&c.volt));
        let mut dr = Table::new();
        dr.insert("m_p".into(), f(c.droop.m_p));
        dr.insert("lpf_cutoff".into(), f(c.droop.lpf_cutoff));
        t.insert("droop".into(), Value::Table(dr));
        root.insert("control".into(), Value::Table(t));

        root.insert("output_dir".into(), Value::String(self.output_dir.to_string_lossy().into_owned()));
        root.insert("decimation".into(), Value::Integer(self.decimation as i64));
        root.insert("parallel".into(), Value::Boolean(self.parallel));
        root.insert("gnuplot".into(), Value::Boolean(self.gnuplot));
        root.insert("window".into(), f(self.window));
        root.insert("threshold".into(), f(self.threshold));

        let scenarios = self
            .scenarios
            .iter()
            .map(|s| {
                let mut t = Table::new();
                t.insert("name".into(), Value::String(s.name.clone()));
                t.insert("initial_mode".into(), Value::String(mode_str(s.initial_mode).into()));
                if let Some(m) = s.target_mode {
                    t.insert("target_mode".into(), Value::String(mode_str(m).into()));
                }
                t.insert("t_switch".into(), f(s.t_switch));
                t.insert("duration".into(), f(s.duration));
                t.insert("dt".into(), f(s.dt));
                if let Some(d) = s.decimation {
                    t.insert("decimation".into(), Value::Integer(d as i64));
                }
                let mut fl = Table::new();
                fl.insert("use_sync".into(), Value::Boolean(s.flags.use_sync));
                fl.insert("use_amplitude".into(), Value::Boolean(s.flags.use_amplitude));
                fl.insert("use_full_mapping".into(), Value::Boolean(s.flags.use_full_mapping));
                t.insert("flags".into(), Value::Table(fl));
                t.insert("initial_refs".into(), refs_value(&s.initial_refs));
                if let Some(r) = &s.target_refs {
                    t.insert("target_refs".into(), refs_value(r));
                }
                if !s.schedule.is_empty() {
                    let items = s
                        .schedule
                        .iter()
                        .map(|(time, r)| {
                            let mut c = Table::new();
                            c.insert("t".into(), f(*time));
                            c.insert("refs".into(), refs_value(r));
                            Value::Table(c)
                        })
                        .collect();
                    t.insert("schedule".into(), Value::Array(items));
                }
                t.insert("ordering".into(), Value::String(ordering_str(s.ordering).into()));
                if let Some(th) = s.threshold {
                    t.insert("threshold".into(), f(th));
                }
                Value::Table(t)
            })
            .collect();
        root.insert("scenario".into(), Value::Array(scenarios));

        let mut t = Table::new();
        t.insert("refs".into(), refs_value(&self.equilibrium.gfl_refs));
        root.insert("equilibrium".into(), Value::Table(t));

        let b = &self.basin;
        let mut t = Table::new();
        t.insert("refs".into(), refs_value(&b.refs));
        let axes = b
            .axes
            .iter()
            .map(|a| {
                let mut x = Table::new();
                x.insert("state".into(), Value::String(a.state.clone()));
                x.insert("half_width".into(), f(a.half_width));
                x.insert("points".into(), Value::Integer(a.points as i64));
                Value::Table(x)
            })
            .collect();
        t.insert("axes".into(), Value::Array(axes));
        t.insert("t_max".into(), f(b.t_max));
        t.insert("tol".into(), f(b.tol));
        t.insert("dt".into(), f(b.dt));
        root.insert("basin".into(), Value::Table(t));

        let s = &self.sweep;
        let mut t = Table::new();
        t.insert("grid_current".into(), f(s.grid_current));
        t.insert("t_switch".into(), f(s.t_switch));
        t.insert("duration".into(), f(s.duration));
        t.insert("dt".into(), f(s.dt));
        root.insert("sweep".into(), Value::Table(t));

        toml::to_string(&root).expect("a plain table always serializes")
    }
}

fn mode_str(m: Mode) -> &'static str {
    match m {
        Mode::Gfl => "gfl",
        Mode::Gfm => "gfm",
    }
}

fn refs_value(r: &RefInput) -> Value {
    let mut t = Table::new();
    let pair = |p: &DqPair| Value::Array(vec![Value::Float(p.d), Value::Float(p.q)]);
    match r {
        RefInput::Current(i) => {
            t.insert("i_ref".into(), pair(i));
        }
        RefInput::GridCurrent(i) => {
            t.insert("grid_current".into(), Value::Float(*i));
        }
        RefInput::Voltage { v_ref, p_ref } => {
            t.insert("v_ref".into(), pair(v_ref));
            t.insert("p_ref".into(), Value::Float(*p_ref));
        }
        RefInput::MatchGridCurrent(i) => {
            t.insert("match_grid_current".into(), Value::Float(*i));
        }
    }
    Value::Table(t)
}

/// Applies `dotted.path=value`. Numeric segments index arrays; missing
/// tables are created. The value is read as TOML, falling back to a plain
/// string.
pub fn apply_override(doc: &mut Value, assignment: &str) -> Result<()> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::invalid("--override", format!("`{assignment}` is not key=value")))?;
    let path = path.trim();
    if path.is_empty() {
        return Err(Error::invalid("--override", "empty key"));
    }
    let value = match format!("v = {}", raw.trim()).parse::<Table>() {
        Ok(mut t) => t.remove("v").expect("key parsed"),
        Err(_) => Value::String(raw.trim().to_string()),
    };
    let segments: Vec<&str> = path.split('.').collect();
    let mut cur = doc;
    for (i, seg) in segments.iter().enumerate() {
        let last = i + 1 == segments.len();
        let here = segments[..=i].join(".");
        cur = match cur {
            Value::Table(t) => {
                if last {
                    t.insert((*seg).to_string(), value);
                    return Ok(());
                }
                let next_is_index = segments[i + 1].parse::<usize>().is_ok();
                t.entry(seg.to_string()).or_insert_with(|| {
                    if next_is_index {
                        Value::Array(Vec::new())
                    } else {
                        Value::Table(Table::new())
                    }
                })
            }
            Value::Array(a) => {
                let idx: usize = seg
                    .parse()
                    .map_err(|_| Error::invalid(&here, "expected an array index"))?;
                if idx > a.len() {
                    return Err(Error::invalid(&here, format!("index out of range (length {})", a.len())));
                }
                if idx == a.len() {
                    a.push(Value::Table(Table::new()));
                }
                if last {
                    a[idx] = value;
                    return Ok(());
                }
                &mut a[idx]
            }
            _ => return Err(Error::invalid(&here, "cannot descend into a scalar")),
        };
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantities_with_units() {
        let b = PerUnitBase::default();
        let q = |s: &str, d| parse_quantity(s, d, Some(&b)).unwrap();
        assert!((q("5 mH", Dim::Inductance) - 5e-3).abs() < 1e-18);
        assert_eq!(q("30uF", Dim::Capacitance), 30e-6);
        assert_eq!(q("5 mH", Dim::Inductance), 5e-3);
        assert!((q("30 µF", Dim::Capacitance) - 30e-6).abs() < 1e-18);
        assert_eq!(q("0.4 ohm", Dim::Resistance), 0.4);
        assert_eq!(q("2 kW", Dim::Power), 2000.0);
        assert!((q("50 Hz", Dim::AngularFrequency) - 100.0 * PI).abs() < 1e-12);
        assert!((q("10 us", Dim::Time) - 1e-5).abs() < 1e-20);
        assert!((q("1 pu", Dim::Resistance) - b.z_base).abs() < 1e-12);
        assert_eq!(q("1e-3 s", Dim::Time), 1e-3);
        assert!(parse_quantity("5 kg", Dim::Inductance, Some(&b)).is_err());
        assert!(parse_quantity("1 pu", Dim::Power, None).is_err());
        assert!(parse_quantity("mH", Dim::Inductance, Some(&b)).is_err());
    }

    #[test]
    fn empty_document_gives_defaults() {
        assert_eq!(parse_config("").unwrap(), RunConfig::default());
    }

    #[test]
    fn unknown_key_is_named() {
        let e = parse_config("[plant]\nl_x = 1.0\n").unwrap_err();
        assert!(e.to_string().contains("plant.l_x"), "{e}");
        let e = parse_config("[[scenario]]\nname = \"a\"\ninitial_mode = \"gfl\"\nbogus = 1\n").unwrap_err();
        assert!(e.to_string().contains("scenario.0.bogus"), "{e}");
    }

    #[test]
    fn negative_inductance_is_named() {
        let e = parse_config("[plant]\nl_f = \"-5 mH\"\n").unwrap_err();
        assert!(matches!(&e, Error::Invalid { path, .. } if path.contains("l_f")), "{e}");
    }

    #[test]
    fn malformed_document() {
        assert!(matches!(parse_config("[plant\n"), Err(Error::Config(_))));
    }

    #[test]
    fn overrides_follow_dotted_paths() {
        let text = "[[scenario]]\nname = \"a\"\ninitial_mode = \"gfl\"\ntarget_mode = \"gfm\"\n";
        let c = parse_config_with_overrides(
            text,
            &["control.current.kp=3.5".into(), "scenario.0.t_switch=\"50 ms\"".into(), "plant.l_g=\"3 mH\"".into()],
        )
        .unwrap();
        assert_eq!(c.params.control.cur.kp, 3.5);
        assert_eq!(c.scenarios[0].t_switch, 0.05);
        assert!((c.params.plant.l_g - 3e-3).abs() < 1e-15);
        assert!(parse_config_with_overrides(text, &["scenario.5.t_switch=1".into()]).is_err());
        assert!(parse_config_with_overrides(text, &["nokey".into()]).is_err());
    }

    #[test]
    fn emitted_config_parses_back() {
        let mut c = RunConfig::default();
        c.scenarios.push(ScenarioConfig {
            name: "after".into(),
            initial_mode: Mode::Gfm,
            target_mode: Some(Mode::Gfl),
            t_switch: 0.2,
            duration: 0.6,
            dt: 5e-6,
            decimation: Some(3),
            flags: MappingFlags::SYNC_ONLY,
            initial_refs: RefInput::Voltage {
                v_ref: DqPair::new(1.01, 0.0),
                p_ref: 0.3,
            },
            target_refs: Some(RefInput::Current(DqPair::new(0.4, 0.1))),
            schedule: vec![(0.4, RefInput::Current(DqPair::new(0.3, 0.0)))],
            ordering: Ordering::SetpointAfterSwitch,
            threshold: Some(2e-3),
        });
        c.params.control.droop.m_p = 0.1 / 3.0;
        let text = c.to_toml();
        assert_eq!(parse_config(&text).unwrap(), c, "{text}");
    }

    #[test]
    fn refs_need_exactly_one_form() {
        let text = "[[scenario]]\nname = \"a\"\ninitial_mode = \"gfl\"\n[scenario.initial_refs]\ni_ref = [0.5, 0.0]\ngrid_current = 0.5\n";
        let e = parse_config(text).unwrap_err();
        assert!(e.to_string().contains("scenario.0.initial_refs"), "{e}");
    }

    #[test]
    fn scenario_invariants_checked_at_parse() {
        let text = "[[scenario]]\nname = \"a\"\ninitial_mode = \"gfl\"\ntarget_mode = \"gfm\"\ndt = \"100 us\"\n";
        let e = parse_config(text).unwrap_err();
        assert!(e.to_string().contains("scenario.0.dt"), "{e}");
    }
}
