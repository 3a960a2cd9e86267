//! Scenario configuration, runs, and trace checking.

pub mod check;
pub mod config;
pub mod fixtures;
pub mod run;
pub mod sweep;

pub use check::{check_trace, CheckError, CheckReport, PropertyResult, SpecFamily, Status};
pub use config::{ConfigError, FaultConfig, Role, ScenarioConfig};
pub use run::{run_scenario, RunOutcome};
pub use sweep::{parse_seed_range, sweep, SeedResult, SweepReport};
