//! White Rabbit-style composite synchronization over a fiber link.
//!
//! The composite runs four ingredients in a fixed order: syntonize the slave
//! to the master's carrier (phase measurement is meaningless between
//! free-running oscillators), run a hardware-timestamped two-way exchange at
//! link rate, complete each timestamp's sub-period fraction with a
//! time-interval measurement, and correct the calibrated fiber asymmetry.
//! The phase loop-back measurement is performed once per exchange.

use rand_chacha::ChaCha12Rng;

use super::phase::{phase_measure, EdgeStream};
use super::two_way::{two_way_estimate, FourWayTimestamps};
use super::{EstimateFlag, ProtocolError, SyncEstimate};
use crate::channel::{Direction, FiberLink};
use crate::oscillator::ClockState;
use crate::timebase::{PhaseFraction, SimDuration, SimTime};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WrConfig {
    /// Hardware timestamp granularity: the link carrier period (8 ns at the
    /// 125 MHz rate of gigabit Ethernet).
    pub link_period_ps: i64,
    /// Quantization step of the time-interval measurement.
    pub phase_resolution_ps: i64,
    /// Master-side turnaround between receiving the request and sending the
    /// response.
    pub turnaround: SimDuration,
}

impl Default for WrConfig {
    fn default() -> Self {
        Self {
            link_period_ps: 8000,
            phase_resolution_ps: 10,
            turnaround: SimDuration::from_micros(1),
        }
    }
}

/// Hardware capture of a local reading: the counter supplies whole link
/// periods, and the time-interval counter completes the fraction by measuring
/// the phase between the counter's edge grid and the actual edge.
pub fn refine_reading(
    local: SimTime,
    link_period_ps: i64,
    resolution_ps: i64,
) -> Result<(SimTime, PhaseFraction), ProtocolError> {
    let base = local.ps().div_euclid(link_period_ps) * link_period_ps;
    let fraction = phase_measure(
        &EdgeStream::new(link_period_ps, 0),
        &EdgeStream::new(link_period_ps, local.ps()),
        resolution_ps,
    )?;
    Ok((SimTime::from_ps(base + fraction.ps), fraction))
}

struct WrMeasurement {
    estimate: SyncEstimate,
    completed_at: SimTime,
}

/// One exchange worth of measurement: syntonize, four refined timestamps,
/// two-way estimate. Asymmetry correction and slave steering are left to the
/// callers so calibration can observe the raw bias.
fn wr_measure(
    now: SimTime,
    master: &mut ClockState,
    slave: &mut ClockState,
    link: &FiberLink,
    cfg: &WrConfig,
    master_rng: &mut ChaCha12Rng,
    slave_rng: &mut ChaCha12Rng,
) -> Result<WrMeasurement, ProtocolError> {
    master.advance(now, None, master_rng);
    slave.lock_rate_to(master.total_frac_freq())?;
    slave.advance(now, None, slave_rng);

    let (t_b1, _) = refine_reading(
        slave.sample_reading(slave_rng),
        cfg.link_period_ps,
        cfg.phase_resolution_ps,
    )?;

    let arr_request = now + link.delay(Direction::Backward);
    master.advance(arr_request, None, master_rng);
    let (t_a2, _) = refine_reading(
        master.sample_reading(master_rng),
        cfg.link_period_ps,
        cfg.phase_resolution_ps,
    )?;

    let departs = arr_request + cfg.turnaround;
    master.advance(departs, None, master_rng);
    let (t_a3, _) = refine_reading(
        master.sample_reading(master_rng),
        cfg.link_period_ps,
        cfg.phase_resolution_ps,
    )?;

    let arr_response = departs + link.delay(Direction::Forward);
    slave.advance(arr_response, None, slave_rng);
    let (t_b4, fraction) = refine_reading(
        slave.sample_reading(slave_rng),
        cfg.link_period_ps,
        cfg.phase_resolution_ps,
    )?;
    // Keep both clocks aligned at the completion instant.
    master.advance(arr_response, None, master_rng);

    let mut estimate = two_way_estimate(&FourWayTimestamps {
        t_b1,
        t_a2,
        t_a3,
        t_b4,
    })?;
    estimate.phase_correction = Some(fraction);
    Ok(WrMeasurement {
        estimate,
        completed_at: arr_response,
    })
}

/// Run one White Rabbit synchronization round and steer the slave.
///
/// Returns the final estimate and the physical time at which the exchange
/// completed (both clocks are advanced to it). An uncalibrated link yields a
/// flagged estimate whose offset carries half the link asymmetry as bias;
/// nothing can detect that without calibration, so it is surfaced, not fixed.
pub fn white_rabbit_sync(
    now: SimTime,
    master: &mut ClockState,
    slave: &mut ClockState,
    link: &FiberLink,
    cfg: &WrConfig,
    master_rng: &mut ChaCha12Rng,
    slave_rng: &mut ChaCha12Rng,
) -> Result<(SyncEstimate, SimTime), ProtocolError> {
    let measured = wr_measure(now, master, slave, link, cfg, master_rng, slave_rng)?;
    let mut estimate = measured.estimate;
    match link.calibrated_asymmetry {
        Some(asym) => {
            let correction = asym.half_toward_zero();
            estimate.offset -= correction;
            estimate.asymmetry_correction_applied = correction;
        }
        None => {
            estimate.flag = estimate
                .flag
                .or(Some(EstimateFlag::UncalibratedAsymmetricLink));
        }
    }
    slave.step_phase(-estimate.offset)?;
    Ok((estimate, measured.completed_at))
}

/// Pre-calibration against a privileged reference: measure the raw two-way
/// bias over `rounds` exchanges with the slave untouched, and back out the
/// asymmetry that explains it. `known_reference` is the true slave-minus-
/// master offset at `now`, which a real deployment gets from a reference
/// clock at the slave site.
pub fn calibrate_link(
    now: SimTime,
    master: &mut ClockState,
    slave: &mut ClockState,
    link: &FiberLink,
    known_reference: SimDuration,
    cfg: &WrConfig,
    rounds: u32,
    master_rng: &mut ChaCha12Rng,
    slave_rng: &mut ChaCha12Rng,
) -> Result<FiberLink, ProtocolError> {
    assert!(rounds > 0, "calibration needs at least one round");
    let mut t = now;
    let mut bias_sum: i128 = 0;
    for _ in 0..rounds {
        let m = wr_measure(t, master, slave, link, cfg, master_rng, slave_rng)?;
        bias_sum += (m.estimate.offset - known_reference).ps() as i128;
        t = m.completed_at + cfg.turnaround;
    }
    let mean_bias = (bias_sum / rounds as i128) as i64;
    // The raw offset bias is half the asymmetry; store the full asymmetry on
    // the instrument's grid.
    let res = cfg.phase_resolution_ps;
    let asym = 2 * mean_bias;
    let snapped = (asym as f64 / res as f64).round() as i64 * res;
    Ok(FiberLink {
        calibrated_asymmetry: Some(SimDuration::from_ps(snapped)),
        ..link.clone()
    })
}
