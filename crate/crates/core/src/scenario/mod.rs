//! Config-driven runs of the two expansion protocols and parameter sweeps.

pub mod checkpoint;
pub mod config;
pub mod engine;
pub mod run;
pub mod sweep;

pub use config::{EngineChoice, ScenarioConfig, ScenarioKind};
pub use run::{run_scenario, RunOutcome, Runner};
pub use sweep::{run_sweep, SweepOutcome};
