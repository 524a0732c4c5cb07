//! Scenario configuration, orchestration, indicators, and file emission.

pub mod config;
pub mod indicators;
pub mod run;
pub mod synth;

pub use config::{load_scenario, parse_strategy, Scenario, OUT_ROOT_ENV};
pub use indicators::{average_detention_time, duration_curve, treated_volume, IndicatorReport};
pub use run::{
    build_provider, pond_forcing, read_hydrograph, report_from_dir, run_scenario, run_strategy,
    run_watershed, ScenarioOutcome,
};
pub use synth::{write_demo_scenario, DemoKind};
