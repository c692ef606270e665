//! The physical-time axis of the simulation.
//!
//! All times and durations are signed integer picosecond counts, so arithmetic
//! on the time axis is exact: there is no floating-point accumulation anywhere
//! between the simulation epoch and a timestamp. The i64 range covers about
//! ±106 days, comfortably above the ±10^18 ps (±11.5 days) the simulation
//! guarantees.
//!
//! A [`Timestamp`] is what a counter-based clock can actually produce: a count
//! of oscillator rising edges, with one-period resolution. The sub-period
//! remainder is deliberately not representable there; it lives in
//! [`PhaseFraction`], the output of a time-interval-counter measurement.

use std::fmt;
use std::ops::{Add, AddAssign, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Picoseconds per second.
pub const PS_PER_SECOND: i64 = 1_000_000_000_000;
/// Picoseconds per millisecond.
pub const PS_PER_MILLISECOND: i64 = 1_000_000_000;
/// Picoseconds per microsecond.
pub const PS_PER_MICROSECOND: i64 = 1_000_000;
/// Picoseconds per nanosecond.
pub const PS_PER_NANOSECOND: i64 = 1_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TimebaseError {
    #[error("integer picosecond range exceeded in {0}")]
    Overflow(&'static str),
    #[error("event at {event} precedes the clock epoch {epoch}")]
    EventBeforeEpoch { event: SimTime, epoch: SimTime },
    #[error("period must be positive, got {0} ps")]
    NonPositivePeriod(i64),
    #[error("phase fraction {phase_ps} ps must be below the period {period_ps} ps")]
    PhaseExceedsPeriod { phase_ps: i64, period_ps: i64 },
    #[error("phase fraction must be non-negative, got {0} ps")]
    NegativePhase(i64),
    #[error("resolution must be positive, got {0} ps")]
    NonPositiveResolution(i64),
    #[error("phase {phase_ps} ps is not a multiple of the resolution {resolution_ps} ps")]
    OffResolutionGrid { phase_ps: i64, resolution_ps: i64 },
}

/// A point on the simulation's physical time axis, in integer picoseconds
/// since the simulation epoch.
#[derive(
    Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct SimTime(i64);

/// A signed span of physical time in integer picoseconds.
#[derive(
    Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct SimDuration(i64);

impl SimTime {
    pub const ZERO: Self = Self(0);

    #[inline]
    pub const fn from_ps(ps: i64) -> Self {
        Self(ps)
    }

    #[inline]
    pub const fn ps(self) -> i64 {
        self.0
    }

    pub fn from_secs(s: i64) -> Self {
        Self(
            s.checked_mul(PS_PER_SECOND)
                .expect("SimTime overflow: seconds out of range"),
        )
    }

    #[inline]
    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / PS_PER_SECOND as f64
    }

    /// Duration since an earlier time (may be negative if `earlier` is later).
    #[inline]
    pub fn since(self, earlier: SimTime) -> SimDuration {
        self - earlier
    }

    pub fn checked_add(self, d: SimDuration) -> Option<Self> {
        self.0.checked_add(d.0).map(Self)
    }
}

impl SimDuration {
    pub const ZERO: Self = Self(0);

    #[inline]
    pub const fn from_ps(ps: i64) -> Self {
        Self(ps)
    }

    #[inline]
    pub const fn ps(self) -> i64 {
        self.0
    }

    pub fn from_secs(s: i64) -> Self {
        Self(
            s.checked_mul(PS_PER_SECOND)
                .expect("SimDuration overflow: seconds out of range"),
        )
    }

    pub const fn from_nanos(ns: i64) -> Self {
        Self(ns * PS_PER_NANOSECOND)
    }

    pub const fn from_micros(us: i64) -> Self {
        Self(us * PS_PER_MICROSECOND)
    }

    pub const fn from_millis(ms: i64) -> Self {
        Self(ms * PS_PER_MILLISECOND)
    }

    /// Nearest-integer picosecond count for a duration given in seconds.
    pub fn from_secs_f64(s: f64) -> Self {
        let ps = (s * PS_PER_SECOND as f64).round();
        assert!(
            ps.abs() < i64::MAX as f64,
            "SimDuration overflow: {s} s out of range"
        );
        Self(ps as i64)
    }

    #[inline]
    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / PS_PER_SECOND as f64
    }

    #[inline]
    pub fn abs(self) -> Self {
        Self(self.0.abs())
    }

    /// Halve the duration, rounding toward zero (so `-7 ps` halves to `-3 ps`).
    /// This is the rounding rule used by every two-way estimator.
    #[inline]
    pub fn half_toward_zero(self) -> Self {
        Self(self.0 / 2)
    }

    pub fn checked_add(self, other: Self) -> Option<Self> {
        self.0.checked_add(other.0).map(Self)
    }

    pub fn scaled(self, factor: i64) -> Self {
        Self(
            self.0
                .checked_mul(factor)
                .expect("SimDuration overflow in scaling"),
        )
    }

    #[inline]
    pub fn is_positive(self) -> bool {
        self.0 > 0
    }

    #[inline]
    pub fn is_negative(self) -> bool {
        self.0 < 0
    }
}

impl Add<SimDuration> for SimTime {
    type Output = SimTime;
    #[inline]
    fn add(self, rhs: SimDuration) -> SimTime {
        SimTime(self.0.checked_add(rhs.0).expect("SimTime overflow in add"))
    }
}

impl AddAssign<SimDuration> for SimTime {
    #[inline]
    fn add_assign(&mut self, rhs: SimDuration) {
        *self = *self + rhs;
    }
}

impl Sub<SimDuration> for SimTime {
    type Output = SimTime;
    #[inline]
    fn sub(self, rhs: SimDuration) -> SimTime {
        SimTime(self.0.checked_sub(rhs.0).expect("SimTime overflow in sub"))
    }
}

impl Sub for SimTime {
    type Output = SimDuration;
    #[inline]
    fn sub(self, rhs: SimTime) -> SimDuration {
        SimDuration(
            self.0
                .checked_sub(rhs.0)
                .expect("SimDuration overflow in time difference"),
        )
    }
}

impl Add for SimDuration {
    type Output = SimDuration;
    #[inline]
    fn add(self, rhs: SimDuration) -> SimDuration {
        SimDuration(
            self.0
                .checked_add(rhs.0)
                .expect("SimDuration overflow in add"),
        )
    }
}

impl AddAssign for SimDuration {
    #[inline]
    fn add_assign(&mut self, rhs: SimDuration) {
        *self = *self + rhs;
    }
}

impl Sub for SimDuration {
    type Output = SimDuration;
    #[inline]
    fn sub(self, rhs: SimDuration) -> SimDuration {
        SimDuration(
            self.0
                .checked_sub(rhs.0)
                .expect("SimDuration overflow in sub"),
        )
    }
}

impl SubAssign for SimDuration {
    #[inline]
    fn sub_assign(&mut self, rhs: SimDuration) {
        *self = *self - rhs;
    }
}

impl Neg for SimDuration {
    type Output = SimDuration;
    #[inline]
    fn neg(self) -> SimDuration {
        SimDuration(self.0.checked_neg().expect("SimDuration overflow in neg"))
    }
}

impl fmt::Debug for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SimTime({} ps)", self.0)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ps", self.0)
    }
}

impl fmt::Debug for SimDuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SimDuration({} ps)", self.0)
    }
}

impl fmt::Display for SimDuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ps", self.0)
    }
}

/// A counter reading: the number of oscillator rising edges since the clock's
/// epoch, at one-period resolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Timestamp {
    pub ticks: u64,
    pub period_ps: i64,
}

impl Timestamp {
    pub fn new(ticks: u64, period_ps: i64) -> Result<Self, TimebaseError> {
        if period_ps <= 0 {
            return Err(TimebaseError::NonPositivePeriod(period_ps));
        }
        Ok(Self { ticks, period_ps })
    }
}

/// The sub-period remainder of an event relative to the preceding rising edge,
/// as measured by an instrument with finite quantization.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PhaseFraction {
    pub ps: i64,
    pub resolution_ps: i64,
}

impl PhaseFraction {
    pub fn new(ps: i64, resolution_ps: i64) -> Result<Self, TimebaseError> {
        if resolution_ps <= 0 {
            return Err(TimebaseError::NonPositiveResolution(resolution_ps));
        }
        if ps < 0 {
            return Err(TimebaseError::NegativePhase(ps));
        }
        if ps % resolution_ps != 0 {
            return Err(TimebaseError::OffResolutionGrid {
                phase_ps: ps,
                resolution_ps,
            });
        }
        Ok(Self { ps, resolution_ps })
    }

    /// Floor a raw sub-period offset onto the instrument's quantization grid.
    pub fn quantize(raw_ps: i64, resolution_ps: i64) -> Result<Self, TimebaseError> {
        if resolution_ps <= 0 {
            return Err(TimebaseError::NonPositiveResolution(resolution_ps));
        }
        if raw_ps < 0 {
            return Err(TimebaseError::NegativePhase(raw_ps));
        }
        Self::new(raw_ps - raw_ps % resolution_ps, resolution_ps)
    }
}

/// Reconstruct the time a timestamp denotes: `ticks × period`, plus the
/// measured phase fraction when an instrument supplied one.
pub fn timestamp_to_simtime(
    ts: Timestamp,
    phase: Option<PhaseFraction>,
) -> Result<SimTime, TimebaseError> {
    if ts.period_ps <= 0 {
        return Err(TimebaseError::NonPositivePeriod(ts.period_ps));
    }
    let phase_ps = match phase {
        Some(p) => {
            if p.ps >= ts.period_ps {
                return Err(TimebaseError::PhaseExceedsPeriod {
                    phase_ps: p.ps,
                    period_ps: ts.period_ps,
                });
            }
            p.ps as i128
        }
        None => 0,
    };
    let total = ts.ticks as i128 * ts.period_ps as i128 + phase_ps;
    i64::try_from(total)
        .map(SimTime::from_ps)
        .map_err(|_| TimebaseError::Overflow("timestamp_to_simtime"))
}

/// Capture an event on a counter: the timestamp of an event is the index of
/// the most recent rising edge at or before the event (floor semantics; an
/// event exactly on an edge belongs to that edge).
pub fn quantize_event(
    t: SimTime,
    period_ps: i64,
    epoch: SimTime,
) -> Result<Timestamp, TimebaseError> {
    if period_ps <= 0 {
        return Err(TimebaseError::NonPositivePeriod(period_ps));
    }
    if t < epoch {
        return Err(TimebaseError::EventBeforeEpoch { event: t, epoch });
    }
    let elapsed = (t - epoch).ps();
    Timestamp::new((elapsed / period_ps) as u64, period_ps)
}
