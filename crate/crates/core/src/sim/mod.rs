//! Fixed-step simulation: the stepping engine, scenarios with a mode switch,
//! recorded traces and post-switch transient metrics.

mod engine;
mod metrics;
mod scenario;
mod trace;

pub use engine::{
    command_in_grid_frame, rk4_plant, sync_distance, SimState, Simulator, StepSample, DIVERGENCE_LIMIT_PU,
};
pub use metrics::{
    scenario_metrics, transient_metrics, SignalMetrics, TransientMetrics, PRE_SWITCH_WINDOW, SIGNALS,
    SETTLING_BAND,
};
pub use scenario::{
    run_batch, run_scenario, switch_event, Ordering, Scenario, SetpointChange, SwitchRecord, DEFAULT_DECIMATION,
    DEFAULT_DT, MAX_DT,
};
pub use trace::{Trace, TraceRecord, CSV_HEADER};
