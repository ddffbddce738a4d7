//! Simulation and analysis of a single inverter on an infinite bus, with
//! grid-following (SRF-PLL + current loop) and grid-forming (P-ω droop +
//! voltage and current loops) control, and a state-mapping hand-off that
//! switches between the two without a transient.
//!
//! The crate is organized bottom-up:
//!
//! * [`frames`]: Park/Clarke transforms and per-unit bases
//! * [`plant`]: LCL filter and stiff grid
//! * [`control`]: PI, PLL, droop primitives
//! * [`modes`]: the two closed-loop controllers and the unified state view
//! * [`equilibrium`]: equilibria, linear stability and basin sampling
//! * [`mapping`]: the state mapping applied at a mode switch
//! * [`sim`]: fixed-step scenario engine, traces and transient metrics
//! * [`cli`]: configuration, reports and the command entry points

pub mod cli;
pub mod control;
pub mod equilibrium;
pub mod error;
pub mod frames;
pub mod mapping;
pub mod modes;
pub mod plant;
pub mod sim;

use serde::{Deserialize, Serialize};

pub use error::{Error, Result};

/// Everything needed to evaluate the closed loop.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SystemParams {
    pub base: frames::PerUnitBase,
    pub plant: plant::PlantParams,
    pub control: control::ControlParams,
}

impl SystemParams {
    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        self.plant.validate()?;
        self.control.validate()
    }

    /// Grid voltage amplitude, pu.
    pub fn v_g_pu(&self) -> f64 {
        self.plant.v_g_amp / self.base.v_base
    }
}
