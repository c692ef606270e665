//! The three two-way time-transfer variants.
//!
//! All three assume the forward and backward paths are symmetric; under an
//! asymmetric channel every one of them mis-estimates the offset by half the
//! asymmetry, which the tests pin down as an exact law.

use super::{ProtocolError, SyncEstimate};
use crate::timebase::{SimDuration, SimTime};

/// Request/response exchange with four timestamps: B stamps its request
/// (`t_b1`) and the response arrival (`t_b4`); A stamps the request arrival
/// (`t_a2`) and its response departure (`t_a3`).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FourWayTimestamps {
    pub t_b1: SimTime,
    pub t_a2: SimTime,
    pub t_a3: SimTime,
    pub t_b4: SimTime,
}

/// Simultaneous-send exchange: both clocks transmit at the same local time
/// and measure the arrival interval of the other's signal with a
/// time-interval counter.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct IntervalPair {
    pub tau_a: SimDuration,
    pub tau_b: SimDuration,
}

/// Loop-back exchange: B's signal is reflected by A and the total round trip
/// `tau` is measured at B; a subsequent one-way timestamp pair (`t_a`, `t_b`)
/// yields the offset.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RoundTripRecord {
    pub tau: SimDuration,
    pub t_a: SimTime,
    pub t_b: SimTime,
}

/// NTP/PTP-style estimate:
/// `d = [(t_b4 − t_b1) − (t_a3 − t_a2)] / 2`,
/// `delta = [(t_b4 − t_a3) + (t_b1 − t_a2)] / 2`.
///
/// A negative computed delay is returned flagged, not silently accepted.
pub fn two_way_estimate(rec: &FourWayTimestamps) -> Result<SyncEstimate, ProtocolError> {
    if rec.t_b4 < rec.t_b1 {
        return Err(ProtocolError::NonCausalTimestamps("t_b4 precedes t_b1"));
    }
    if rec.t_a3 < rec.t_a2 {
        return Err(ProtocolError::NonCausalTimestamps("t_a3 precedes t_a2"));
    }
    let delay = ((rec.t_b4 - rec.t_b1) - (rec.t_a3 - rec.t_a2)).half_toward_zero();
    let offset = ((rec.t_b4 - rec.t_a3) + (rec.t_b1 - rec.t_a2)).half_toward_zero();
    Ok(SyncEstimate::new(delay, offset))
}

/// Two-way satellite time transfer estimate:
/// `d = (tau_b + tau_a) / 2`, `delta = (tau_b − tau_a) / 2`.
pub fn twstt_estimate(rec: &IntervalPair) -> Result<SyncEstimate, ProtocolError> {
    if !rec.tau_a.is_positive() {
        return Err(ProtocolError::NonPositiveInterval("tau_a"));
    }
    if !rec.tau_b.is_positive() {
        return Err(ProtocolError::NonPositiveInterval("tau_b"));
    }
    let delay = (rec.tau_b + rec.tau_a).half_toward_zero();
    let offset = (rec.tau_b - rec.tau_a).half_toward_zero();
    Ok(SyncEstimate::new(delay, offset))
}

/// Round-trip (loop-back) estimate: `d = tau / 2`, then
/// `delta = t_b − t_a − d` from the one-way pair.
pub fn round_trip_estimate(rec: &RoundTripRecord) -> Result<SyncEstimate, ProtocolError> {
    if rec.tau.is_negative() {
        return Err(ProtocolError::NegativeRoundTrip);
    }
    let delay = rec.tau.half_toward_zero();
    let offset = (rec.t_b - rec.t_a) - delay;
    Ok(SyncEstimate::new(delay, offset))
}
