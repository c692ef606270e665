//! Deterministic discrete-event engine, scenario configuration, and the
//! run/compare entry points behind the CLI.

pub mod compare;
pub mod config;
pub mod engine;
pub mod rng;
pub mod run;

pub use compare::{compare_protocols, CompareError, CompareRow, CompareTable};
pub use config::{
    validate_config, ConfigIssue, Medium, NodeConfig, OscillatorSpec, ProtocolConfig,
    ProtocolKind, Scenario, ScenarioConfig, TimestampMode,
};
pub use engine::EventQueue;
pub use rng::RngFactory;
pub use run::{
    report_json, run_scenario, write_outputs, NodeReport, RunError, RunOutcome, RunReport,
};
