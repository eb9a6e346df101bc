//! Scenario configuration, the simulation loop, experiments and exports.
//!
//! A tick senses every drone once after all drones have moved. Tick 0 only
//! senses; its reading from the anchor drone fixes the absolute bias. Each
//! later tick adds `n²` deltas, and from `sbe_start` on re-solves the bias
//! graph from scratch and refits the map.

mod config;
mod experiments;
mod export;
mod run;

pub use config::{
    presets, AnchorConfig, GpSettings, InitialPoses, PlannerKind, PlannerSettings, ScenarioConfig,
};
pub use experiments::{
    run_comparison, run_noise_sweep, sigma_levels, ComparisonTable, RunTrace, SweepCell, SweepRow, SweepTable,
};
pub use export::{export_map, fmt9, write_record};
pub use run::{run_scenario, ExperimentRecord, PlanEvent, RouteSet};
