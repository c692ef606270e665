//! Side-by-side protocol comparison on a shared topology and seed.

use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::harness::config::{topology_fingerprint, Scenario};
use crate::harness::run::{run_scenario, RunError, RunOutcome};

#[derive(Debug, Error)]
pub enum CompareError {
    #[error("scenario \"{label}\" differs from \"{base}\" in more than protocol settings")]
    TopologyMismatch { base: String, label: String },
    #[error("run \"{label}\" failed: {source}")]
    Run {
        label: String,
        #[source]
        source: RunError,
    },
    #[error("nothing to compare")]
    Empty,
}

#[derive(Clone, Debug, Serialize)]
pub struct CompareRow {
    pub label: String,
    pub protocol: String,
    pub steady_max_abs_error_ps: i64,
    pub steady_rms_error_ps: i64,
    pub steady_mean_error_ps: i64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CompareTable {
    /// Rows sorted by steady-state max |error|, best first.
    pub rows: Vec<CompareRow>,
}

impl fmt::Display for CompareTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<24} {:<14} {:>20} {:>20}",
            "scenario", "protocol", "steady max |err| ps", "steady rms err ps"
        )?;
        for row in &self.rows {
            writeln!(
                f,
                "{:<24} {:<14} {:>20} {:>20}",
                row.label, row.protocol, row.steady_max_abs_error_ps, row.steady_rms_error_ps
            )?;
        }
        Ok(())
    }
}

/// Run each labelled scenario and rank them by steady-state max |error| of
/// the disciplined (slave) node. The scenarios must share topology and seed;
/// only protocol settings may differ.
pub fn compare_protocols(
    scenarios: &[(String, Scenario)],
) -> Result<(CompareTable, Vec<RunOutcome>), CompareError> {
    let (base_label, base) = scenarios.first().ok_or(CompareError::Empty)?;
    let base_topology = topology_fingerprint(&base.echo);
    for (label, scn) in &scenarios[1..] {
        if topology_fingerprint(&scn.echo) != base_topology {
            return Err(CompareError::TopologyMismatch {
                base: base_label.clone(),
                label: label.clone(),
            });
        }
    }

    let mut rows = Vec::new();
    let mut outcomes = Vec::new();
    for (label, scn) in scenarios {
        let outcome = run_scenario(scn).map_err(|source| CompareError::Run {
            label: label.clone(),
            source,
        })?;
        // The disciplined clock is the second endpoint of the link (or the
        // only node for GNSS).
        let slave = scn.link.as_ref().map(|&(_, b, _)| b).unwrap_or(0);
        let node = &outcome.report.nodes[slave];
        rows.push(CompareRow {
            label: label.clone(),
            protocol: outcome.report.protocol.clone(),
            steady_max_abs_error_ps: node.steady_state.max_abs_error_ps,
            steady_rms_error_ps: node.steady_state.rms_error_ps,
            steady_mean_error_ps: node.steady_state.mean_error_ps,
        });
        outcomes.push(outcome);
    }
    rows.sort_by_key(|r| r.steady_max_abs_error_ps);
    Ok((CompareTable { rows }, outcomes))
}
