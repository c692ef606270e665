//! Sub-period phase measurement between two syntonized edge streams.
//!
//! This is the time-interval-counter piece: timestamps stop at one-period
//! granularity, and the remaining fraction of a period only exists as the
//! phase difference between edges, measured at the instrument's quantization
//! step.

use super::ProtocolError;
use crate::timebase::PhaseFraction;

/// A periodic pulse train: rising edges at `phase_ps + k * period_ps` on some
/// shared time axis. The phase is stored normalized into [0, period).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EdgeStream {
    pub period_ps: i64,
    pub phase_ps: i64,
}

impl EdgeStream {
    /// Build a stream from any edge position; the phase is reduced mod the
    /// period.
    pub fn new(period_ps: i64, edge_ps: i64) -> Self {
        assert!(period_ps > 0, "edge stream period must be positive");
        Self {
            period_ps,
            phase_ps: edge_ps.rem_euclid(period_ps),
        }
    }
}

/// Sub-period offset of stream `b`'s edges relative to stream `a`'s
/// corresponding edges, floored onto the instrument's quantization grid.
///
/// Both streams must share the nominal frequency (be syntonized); a period
/// mismatch means the phase difference is not a constant and the measurement
/// is invalid.
pub fn phase_measure(
    a: &EdgeStream,
    b: &EdgeStream,
    resolution_ps: i64,
) -> Result<PhaseFraction, ProtocolError> {
    if a.period_ps != b.period_ps {
        return Err(ProtocolError::NotSyntonized {
            a_ps: a.period_ps,
            b_ps: b.period_ps,
        });
    }
    let raw = (b.phase_ps - a.phase_ps).rem_euclid(a.period_ps);
    Ok(PhaseFraction::quantize(raw, resolution_ps)?)
}
