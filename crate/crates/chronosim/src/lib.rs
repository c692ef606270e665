//! chronosim: a deterministic simulator of physical clocks and time-transfer
//! protocols.
//!
//! The simulation keeps physical time as exact integer picoseconds and builds
//! everything above it: oscillator models with bias, aging, temperature and
//! random-walk noise; counters and timestamps at one-period granularity with
//! optional sub-period phase fractions; per-direction channel models; the
//! one-way GNSS pseudorange solve; the three two-way time-transfer variants;
//! a White Rabbit-style composite with syntonization, phase measurement and
//! fiber pre-calibration; and Allan-deviation based precision metrics.
//!
//! Entry points: [`harness::validate_config`] to parse a scenario,
//! [`harness::run_scenario`] to execute it, [`harness::compare_protocols`]
//! to rank protocols on one topology. The `chronosim` binary wraps these.

pub mod channel;
pub mod harness;
pub mod metrics;
pub mod oscillator;
pub mod protocols;
pub mod timebase;

pub use timebase::{SimDuration, SimTime};
