//! Sampled attraction basin: perturb an equilibrium along chosen state
//! components, simulate, and classify where each run ends up.

use std::f64::consts::PI;
use std::fmt;
use std::io::Write;

use rayon::prelude::*;

use super::{component_names, from_vector, split_refs, to_vector, Equilibrium};
use crate::error::{Error, Result};
use crate::frames::wrap_angle;
use crate::modes::Mode;
use crate::sim::{sync_distance, SimState, Simulator};
use crate::SystemParams;

/// Index of δ in the flat state vector (both modes).
const DELTA_INDEX: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BasinClass {
    Converged,
    Diverged,
    Undecided,
}

impl fmt::Display for BasinClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Converged => "converged",
            Self::Diverged => "diverged",
            Self::Undecided => "undecided",
        })
    }
}

/// One perturbed state component and the offsets to try along it.
#[derive(Debug, Clone, PartialEq)]
pub struct BasinAxis {
    /// Index into the layout of [`component_names`].
    pub component: usize,
    pub offsets: Vec<f64>,
}

impl BasinAxis {
    pub fn named(mode: Mode, name: &str, offsets: Vec<f64>) -> Result<Self> {
        let component = component_names(mode)
            .iter()
            .position(|n| *n == name)
            .ok_or_else(|| Error::invalid("basin.axes", format!("no state `{name}` in {mode} mode")))?;
        Ok(Self { component, offsets })
    }

    /// `n` evenly spaced offsets over `[-half_width, half_width]`.
    pub fn symmetric(component: usize, half_width: f64, n: usize) -> Self {
        let offsets = if n <= 1 {
            vec![0.0]
        } else {
            (0..n)
                .map(|k| -half_width + 2.0 * half_width * k as f64 / (n - 1) as f64)
                .collect()
        };
        Self { component, offsets }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BasinOptions {
    pub t_max: f64,
    /// Max per-component distance (pu, rad) that counts as back at the
    /// equilibrium.
    pub tol: f64,
    pub dt: f64,
    pub check_every: u64,
    pub parallel: bool,
}

impl Default for BasinOptions {
    fn default() -> Self {
        Self {
            t_max: 1.0,
            tol: 1e-4,
            dt: 1e-5,
            check_every: 100,
            parallel: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BasinPoint {
    /// Offset per probed axis, same order as [`BasinMap::axes`].
    pub offset: Vec<f64>,
    pub class: BasinClass,
    /// Time at which the run came back within tolerance.
    pub settle_time: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BasinMap {
    pub mode: Mode,
    pub axes: Vec<usize>,
    pub points: Vec<BasinPoint>,
}

impl BasinMap {
    pub fn count(&self, class: BasinClass) -> usize {
        self.points.iter().filter(|p| p.class == class).count()
    }

    pub fn all_converged(&self) -> bool {
        self.points.iter().all(|p| p.class == BasinClass::Converged)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let names = component_names(self.mode);
        let header: Vec<String> = self.axes.iter().map(|&i| format!("d_{}", names[i])).collect();
        writeln!(w, "{},class,settle_time", header.join(","))?;
        for p in &self.points {
            let offs: Vec<String> = p.offset.iter().map(|x| x.to_string()).collect();
            let settle = p.settle_time.map(|t| t.to_string()).unwrap_or_default();
            writeln!(w, "{},{},{}", offs.join(","), p.class, settle)?;
        }
        Ok(())
    }
}

/// Simulates from `eq` plus every offset combination of `axes` and
/// classifies each run. The result does not depend on `opts.parallel`.
pub fn probe_basin(eq: &Equilibrium, params: &SystemParams, axes: &[BasinAxis], opts: &BasinOptions) -> Result<BasinMap> {
    if !eq.stable {
        return Err(Error::invalid("equilibrium", "basin probing needs a stable equilibrium"));
    }
    let n = component_names(eq.mode()).len();
    if let Some(a) = axes.iter().find(|a| a.component >= n) {
        return Err(Error::invalid("basin.axes", format!("component index {} out of range", a.component)));
    }
    if !(opts.t_max > 0.0 && opts.tol > 0.0 && opts.check_every > 0) {
        return Err(Error::invalid("basin", "t_max, tol and check_every must be positive"));
    }

    let mut grid: Vec<Vec<f64>> = vec![Vec::new()];
    for axis in axes {
        grid = grid
            .into_iter()
            .flat_map(|prefix| {
                axis.offsets.iter().map(move |&o| {
                    let mut p = prefix.clone();
                    p.push(o);
                    p
                })
            })
            .collect();
    }

    let run = |offset: &Vec<f64>| -> Result<BasinPoint> {
        let (class, settle_time) = classify(eq, params, axes, offset, opts)?;
        Ok(BasinPoint {
            offset: offset.clone(),
            class,
            settle_time,
        })
    };
    let points = if opts.parallel {
        grid.par_iter().map(run).collect::<Result<Vec<_>>>()?
    } else {
        grid.iter().map(run).collect::<Result<Vec<_>>>()?
    };
    Ok(BasinMap {
        mode: eq.mode(),
        axes: axes.iter().map(|a| a.component).collect(),
        points,
    })
}

fn classify(
    eq: &Equilibrium,
    params: &SystemParams,
    axes: &[BasinAxis],
    offset: &[f64],
    opts: &BasinOptions,
) -> Result<(BasinClass, Option<f64>)> {
    let mode = eq.mode();
    let mut v = to_vector(&eq.state);
    for (axis, o) in axes.iter().zip(offset) {
        v[axis.component] += o;
    }
    let start = from_vector(mode, &v);
    let (gfl_refs, gfm_refs) = split_refs(&eq.refs);
    let mut sim = Simulator::new(*params, opts.dt, SimState::from_sync(&start, gfl_refs, gfm_refs, 0.0, params))?;

    let delta_eq = to_vector(&eq.state)[DELTA_INDEX];
    let mut delta_prev = v[DELTA_INDEX];
    let mut delta_unwrapped = delta_prev;
    loop {
        let x = sim.sync_state();
        if sync_distance(&x, &eq.state) < opts.tol {
            return Ok((BasinClass::Converged, Some(sim.time())));
        }
        let delta = to_vector(&x)[DELTA_INDEX];
        delta_unwrapped += wrap_angle(delta - delta_prev);
        delta_prev = delta;
        // a full pole slip means it left this equilibrium for a neighbouring one
        if (delta_unwrapped - delta_eq).abs() > PI {
            return Ok((BasinClass::Diverged, None));
        }
        if sim.time() >= opts.t_max {
            return Ok((BasinClass::Undecided, None));
        }
        for _ in 0..opts.check_every {
            match sim.step() {
                Ok(_) => {}
                Err(Error::Diverged { .. }) => return Ok((BasinClass::Diverged, None)),
                Err(e) => return Err(e),
            }
        }
    }
}
