//! Synchronization protocol estimators.
//!
//! Conventions used throughout: clock A is the server / master / reflector
//! side, clock B is the clock whose offset is being estimated, and the offset
//! is `delta = t_B − t_A`. Forward path delay is the A-to-B direction. All
//! estimators are exact integer arithmetic on their input timestamps; halving
//! rounds toward zero.

mod gnss;
mod phase;
mod two_way;
mod white_rabbit;

pub use gnss::{
    compensate_cable, flight_time, gnss_solve, gnss_solve_with, residuals_and_jacobian,
    synthetic_constellation, GnssError, GnssSolution, GnssSolverConfig, SatelliteObservation,
    EARTH_RADIUS_M, GNSS_SHELL_ALTITUDE_M,
};
pub use phase::{phase_measure, EdgeStream};
pub use two_way::{
    round_trip_estimate, twstt_estimate, two_way_estimate, FourWayTimestamps, IntervalPair,
    RoundTripRecord,
};
pub use white_rabbit::{calibrate_link, refine_reading, white_rabbit_sync, WrConfig};

use thiserror::Error;

use crate::timebase::{PhaseFraction, SimDuration};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error("non-causal timestamps: {0}")]
    NonCausalTimestamps(&'static str),
    #[error("measured interval must be positive: {0}")]
    NonPositiveInterval(&'static str),
    #[error("round-trip interval must be non-negative")]
    NegativeRoundTrip,
    #[error("edge streams are not syntonized: periods {a_ps} ps vs {b_ps} ps")]
    NotSyntonized { a_ps: i64, b_ps: i64 },
    #[error(transparent)]
    Timebase(#[from] crate::timebase::TimebaseError),
    #[error(transparent)]
    Oscillator(#[from] crate::oscillator::OscillatorError),
}

/// Why an estimate deserves scrutiny. Surfaced rather than hidden so a caller
/// can decide what to do with a suspect round.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EstimateFlag {
    /// The computed path delay is negative: gross asymmetry or corrupted
    /// timestamps.
    NegativeDelay,
    /// The link has a dispersion asymmetry no calibration has corrected; the
    /// offset carries a bias of half the asymmetry.
    UncalibratedAsymmetricLink,
}

/// One protocol round's output: the estimated one-way delay `d` and clock
/// offset `delta = t_B − t_A`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SyncEstimate {
    pub delay: SimDuration,
    pub offset: SimDuration,
    /// Sub-period refinement measured by a time-interval counter, when the
    /// protocol performed one.
    pub phase_correction: Option<PhaseFraction>,
    /// Asymmetry correction already applied to `offset`.
    pub asymmetry_correction_applied: SimDuration,
    pub flag: Option<EstimateFlag>,
}

impl SyncEstimate {
    pub(crate) fn new(delay: SimDuration, offset: SimDuration) -> Self {
        let flag = if delay.is_negative() {
            Some(EstimateFlag::NegativeDelay)
        } else {
            None
        };
        Self {
            delay,
            offset,
            phase_correction: None,
            asymmetry_correction_applied: SimDuration::ZERO,
            flag,
        }
    }
}

/// The raw timestamps of one exchange, tagged by protocol variant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ExchangeRecord {
    NtpStyle(FourWayTimestamps),
    Twstt(IntervalPair),
    RoundTrip(RoundTripRecord),
}

impl ExchangeRecord {
    /// Dispatch to the variant's estimator.
    pub fn estimate(&self) -> Result<SyncEstimate, ProtocolError> {
        match self {
            ExchangeRecord::NtpStyle(r) => two_way_estimate(r),
            ExchangeRecord::Twstt(r) => twstt_estimate(r),
            ExchangeRecord::RoundTrip(r) => round_trip_estimate(r),
        }
    }
}
