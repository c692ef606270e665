//! Scenario execution: the event-driven simulation behind `chronosim run`.
//!
//! All clock mutation happens inside event handlers, ordered by the
//! deterministic queue, so a clock is only ever advanced forward. Sampling
//! events interleave freely with protocol message legs, which is what lets a
//! 1 ms comparison cadence coexist with exchanges whose flight times exceed
//! the cadence.

use std::collections::VecDeque;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use log::{debug, info, warn};
use rand::Rng as _;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use thiserror::Error;

use crate::channel::{cable_delay, sample_delay, CableModel, Direction};
use crate::harness::config::{Medium, ProtocolConfig, ProtocolKind, Scenario, TimestampMode};
use crate::harness::engine::EventQueue;
use crate::harness::rng::RngFactory;
use crate::metrics::{summarize, ErrorSeries, MetricsError, StabilityReport, SummaryStats};
use crate::oscillator::{ClockState, OscillatorError, ServoState};
use crate::protocols::{
    calibrate_link, compensate_cable, flight_time, gnss_solve, refine_reading,
    round_trip_estimate, synthetic_constellation, twstt_estimate, two_way_estimate,
    FourWayTimestamps, GnssError, IntervalPair, ProtocolError, RoundTripRecord,
    SatelliteObservation, WrConfig, EARTH_RADIUS_M,
};
use crate::timebase::{SimDuration, SimTime};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("oscillator: {0}")]
    Oscillator(#[from] OscillatorError),
    #[error("protocol: {0}")]
    Protocol(#[from] ProtocolError),
    #[error("gnss: {0}")]
    Gnss(#[from] GnssError),
    #[error("metrics: {0}")]
    Metrics(#[from] MetricsError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Internal(String),
}

#[derive(Clone, Debug, Serialize)]
pub struct NodeReport {
    pub name: String,
    /// Statistics and Allan ladder over the whole run.
    pub full: StabilityReport,
    /// Statistics over the steady-state window (the configured tail
    /// fraction of the run, servo lock-in excluded).
    pub steady_state: SummaryStats,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub version: String,
    pub seed: u64,
    pub protocol: String,
    pub duration_ps: i64,
    pub sample_cadence_ps: i64,
    pub steady_fraction: f64,
    pub nodes: Vec<NodeReport>,
    /// The scenario as parsed (keys in sorted order).
    pub scenario: serde_json::Value,
}

pub struct RunOutcome {
    pub report: RunReport,
    pub series: Vec<(String, ErrorSeries)>,
}

impl RunOutcome {
    pub fn node(&self, name: &str) -> Option<&NodeReport> {
        self.report.nodes.iter().find(|n| n.name == name)
    }
}

/// Serialize the report deterministically (struct field order, sorted
/// scenario keys, trailing newline).
pub fn report_json(report: &RunReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serializes");
    s.push('\n');
    s
}

/// Write `series_<node>.csv` per node and `report.json` into `dir`.
pub fn write_outputs(outcome: &RunOutcome, dir: &Path) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    for (name, series) in &outcome.series {
        let mut f = fs::File::create(dir.join(format!("series_{name}.csv")))?;
        f.write_all(series.to_csv().as_bytes())?;
    }
    let mut f = fs::File::create(dir.join("report.json"))?;
    f.write_all(report_json(&outcome.report).as_bytes())?;
    Ok(())
}

#[derive(Clone, Debug)]
enum Ev {
    Sample,
    Kickoff { round: u64 },
    ReqArrive { round: u64, t_b1: SimTime },
    RespDepart { round: u64, t_b1: SimTime, t_a2: SimTime },
    RespArrive { round: u64, t_b1: SimTime, t_a2: SimTime, t_a3: SimTime },
    TwsttPlan { round: u64 },
    TwsttSend { round: u64, node: usize, target_local: SimTime, attempts: u8 },
    TwsttArrive { round: u64, at: usize, mark_local: SimTime },
    TwsttDone { round: u64 },
    RtReflect { round: u64, t_tx: SimTime },
    RtPong { round: u64, t_tx: SimTime },
    RtOneWayArrive { round: u64, tau: SimDuration, t_a: SimTime },
    GnssEpoch { round: u64 },
}

struct NodeSim {
    name: String,
    clock: ClockState,
    mode: TimestampMode,
    osc_rng: ChaCha12Rng,
    stamp_rng: ChaCha12Rng,
    /// Most recent software stamp; reads are sequential in program order,
    /// so a node's stamp stream never runs backward.
    last_sw_stamp: SimTime,
    series: ErrorSeries,
}

impl NodeSim {
    fn advance(&mut self, to: SimTime) {
        self.clock.advance(to, None, &mut self.osc_rng);
    }

    /// A protocol timestamp: the counter reading floored to the oscillator
    /// period (hardware capture), plus a software-stack latency draw in
    /// software mode.
    fn capture(&mut self, sw_jitter_hi_ps: i64) -> SimTime {
        let local = self.clock.sample_reading(&mut self.osc_rng);
        let period = self.clock.model().period_ps();
        let ticked = SimTime::from_ps(local.ps().div_euclid(period) * period);
        match self.mode {
            TimestampMode::Hw => ticked,
            TimestampMode::Sw => {
                let jitter = if sw_jitter_hi_ps > 0 {
                    self.stamp_rng.gen_range(0..=sw_jitter_hi_ps)
                } else {
                    0
                };
                let stamp = (ticked + SimDuration::from_ps(jitter)).max(self.last_sw_stamp);
                self.last_sw_stamp = stamp;
                stamp
            }
        }
    }

    /// White Rabbit capture: hardware ticks completed by the
    /// time-interval-counter fraction.
    fn capture_refined(&mut self, resolution_ps: i64) -> Result<SimTime, ProtocolError> {
        let local = self.clock.sample_reading(&mut self.osc_rng);
        let period = self.clock.model().period_ps();
        Ok(refine_reading(local, period, resolution_ps)?.0)
    }

    /// A raw time-interval-counter reading (picosecond resolution).
    fn tic_reading(&mut self) -> SimTime {
        self.clock.sample_reading(&mut self.osc_rng)
    }
}

struct GnssState {
    satellites: Vec<[f64; 3]>,
    receiver_position_m: [f64; 3],
    noise_rng: ChaCha12Rng,
    noise_rms_ps: f64,
    cable_ps: SimDuration,
    cable: Option<CableModel>,
    compensate: bool,
}

struct Runner {
    queue: EventQueue<Ev>,
    nodes: Vec<NodeSim>,
    protocol: ProtocolConfig,
    horizon: SimTime,
    cadence: SimDuration,
    interval: SimDuration,
    /// Indices of the A (master/server/reflector) and B (slave) nodes.
    a: usize,
    b: usize,
    medium: Option<Medium>,
    link_rng: ChaCha12Rng,
    servo: Option<ServoState>,
    filter: VecDeque<(SimDuration, SimDuration)>,
    stepped_once: bool,
    last_discipline_at: Option<SimTime>,
    /// White Rabbit: offsets accumulated toward the next phase step.
    wr_offsets: Vec<i64>,
    twstt_tau: [Option<SimDuration>; 2],
    twstt_round: u64,
    gnss: Option<GnssState>,
    rounds_completed: u64,
    rounds_dropped: u64,
}

impl Runner {
    fn node(&mut self, idx: usize) -> &mut NodeSim {
        &mut self.nodes[idx]
    }

    fn leg_delay(&mut self, dir: Direction) -> SimDuration {
        match self.medium.as_ref().expect("two-clock protocol has a link") {
            Medium::Path(p) => {
                let p = p.clone();
                sample_delay(&p, dir, &mut self.link_rng)
            }
            Medium::Fiber(f) => f.delay(dir),
        }
    }

    fn leg_dropped(&mut self) -> bool {
        match self.medium.as_ref().expect("link") {
            Medium::Path(p) => {
                let p = p.clone();
                p.dropped(&mut self.link_rng)
            }
            Medium::Fiber(_) => false,
        }
    }

    fn round_start(&self, round: u64) -> SimTime {
        SimTime::ZERO + self.interval.scaled(round as i64 + 1)
    }

    /// Responder turnaround: the configured value, or a per-protocol
    /// default (a software server takes about a millisecond to answer, a
    /// White Rabbit port about a microsecond, and a loop-back reflector is
    /// instant).
    fn processing_delay(&self) -> SimDuration {
        match self.protocol.processing_delay_ps {
            Some(ps) => SimDuration::from_ps(ps),
            None => match self.protocol.kind {
                ProtocolKind::NtpStyle | ProtocolKind::PtpHw => SimDuration::from_millis(1),
                ProtocolKind::WhiteRabbit => SimDuration::from_micros(1),
                _ => SimDuration::ZERO,
            },
        }
    }

    fn schedule_next_round(&mut self, round: u64) {
        let at = self.round_start(round + 1);
        if at <= self.horizon {
            match self.protocol.kind {
                ProtocolKind::Gnss => self.queue.schedule(at, Ev::GnssEpoch { round: round + 1 }),
                ProtocolKind::Twstt => unreachable!("twstt rounds run on the plan chain"),
                _ => self.queue.schedule(at, Ev::Kickoff { round: round + 1 }),
            }
        }
    }

    /// Feed one estimate into the discipline chain of the slave: a
    /// minimum-delay gate, a phase step on the first sample after reset,
    /// then PI frequency steering.
    ///
    /// The gate only ever passes the freshest sample: jitter inflates the
    /// round trip, so a sample whose delay exceeds the best delay seen in
    /// the window carries noisy stamps and is held back rather than fed to
    /// the servo. Stale samples are never replayed, which keeps measurement
    /// age out of the loop.
    fn apply_discipline(
        &mut self,
        now: SimTime,
        delay: SimDuration,
        offset: SimDuration,
    ) -> Result<(), RunError> {
        self.filter.push_back((delay, offset));
        while self.filter.len() > self.protocol.filter_window {
            self.filter.pop_front();
        }
        let best = self
            .filter
            .iter()
            .map(|(d, _)| d.ps())
            .min()
            .expect("filter non-empty");
        if delay.ps() > best {
            return Ok(());
        }
        let b = self.b;
        if !self.stepped_once {
            self.stepped_once = true;
            debug!("initial phase step by {}", -offset);
            self.node(b).clock.step_phase(-offset)?;
            self.filter.clear();
            self.last_discipline_at = Some(now);
            if let Some(s) = &mut self.servo {
                s.reset();
            }
            return Ok(());
        }
        if let Some(servo) = &mut self.servo {
            // Normalize the correction by the real time since the last
            // accepted sample: the gate may hold several rounds back, and a
            // correction held twice as long must be half as strong.
            let elapsed = match self.last_discipline_at {
                Some(t) if (now - t).is_positive() => now - t,
                _ => self.interval,
            };
            let corr = servo.step(offset, elapsed)?;
            self.nodes[b].clock.set_steer(corr)?;
        }
        self.last_discipline_at = Some(now);
        self.rounds_completed += 1;
        Ok(())
    }

    fn handle(&mut self, now: SimTime, ev: Ev) -> Result<(), RunError> {
        match ev {
            Ev::Sample => {
                for node in &mut self.nodes {
                    node.advance(now);
                    let reading = node.clock.sample_reading(&mut node.osc_rng);
                    node.series.push(reading - now);
                }
                let next = now + self.cadence;
                if next <= self.horizon {
                    self.queue.schedule(next, Ev::Sample);
                }
                Ok(())
            }
            Ev::Kickoff { round } => match self.protocol.kind {
                ProtocolKind::WhiteRabbit => self.wr_kickoff(now, round),
                ProtocolKind::RoundTrip => self.rt_kickoff(now, round),
                _ => self.two_way_kickoff(now, round),
            },
            Ev::ReqArrive { round, t_b1 } => self.req_arrive(now, round, t_b1),
            Ev::RespDepart { round, t_b1, t_a2 } => self.resp_depart(now, round, t_b1, t_a2),
            Ev::RespArrive {
                round,
                t_b1,
                t_a2,
                t_a3,
            } => {
                if self.protocol.kind == ProtocolKind::WhiteRabbit {
                    self.wr_resp_arrive(now, round, t_b1, t_a2, t_a3)
                } else {
                    self.resp_arrive(now, round, t_b1, t_a2, t_a3)
                }
            }
            Ev::TwsttPlan { round } => self.twstt_plan(now, round),
            Ev::TwsttSend {
                round,
                node,
                target_local,
                attempts,
            } => self.twstt_send(now, round, node, target_local, attempts),
            Ev::TwsttArrive {
                round,
                at,
                mark_local,
            } => self.twstt_arrive(now, round, at, mark_local),
            Ev::TwsttDone { round } => self.twstt_done(now, round),
            Ev::RtReflect { round, t_tx } => self.rt_reflect(now, round, t_tx),
            Ev::RtPong { round, t_tx } => self.rt_pong(now, round, t_tx),
            Ev::RtOneWayArrive { round, tau, t_a } => {
                self.rt_one_way_arrive(now, round, tau, t_a)
            }
            Ev::GnssEpoch { round } => self.gnss_epoch(now, round),
        }
    }

    // ------------------------------------------------------------------
    // NTP_STYLE / PTP_HW / WHITE_RABBIT request-response legs
    // ------------------------------------------------------------------

    fn two_way_kickoff(&mut self, now: SimTime, round: u64) -> Result<(), RunError> {
        let sw = self.protocol.sw_jitter_hi_ps;
        let b = self.b;
        self.node(b).advance(now);
        let t_b1 = self.node(b).capture(sw);
        if self.leg_dropped() {
            self.rounds_dropped += 1;
            debug!("round {round}: request dropped");
            self.schedule_next_round(round);
            return Ok(());
        }
        let d = self.leg_delay(Direction::Backward);
        self.queue.schedule(now + d, Ev::ReqArrive { round, t_b1 });
        Ok(())
    }

    fn wr_kickoff(&mut self, now: SimTime, round: u64) -> Result<(), RunError> {
        let res = self.protocol.phase_resolution_ps;
        let (a, b) = (self.a, self.b);
        // Syntonize before anything else; the phase measurement presumes a
        // frequency-locked slave.
        self.node(a).advance(now);
        let upstream = self.nodes[a].clock.total_frac_freq();
        self.node(b).clock.lock_rate_to(upstream)?;
        self.node(b).advance(now);
        let t_b1 = self.node(b).capture_refined(res)?;
        if self.leg_dropped() {
            self.rounds_dropped += 1;
            self.schedule_next_round(round);
            return Ok(());
        }
        let d = self.leg_delay(Direction::Backward);
        self.queue.schedule(now + d, Ev::ReqArrive { round, t_b1 });
        Ok(())
    }

    fn master_stamp(&mut self, idx: usize) -> Result<SimTime, ProtocolError> {
        if self.protocol.kind == ProtocolKind::WhiteRabbit {
            let res = self.protocol.phase_resolution_ps;
            self.node(idx).capture_refined(res)
        } else {
            let sw = self.protocol.sw_jitter_hi_ps;
            Ok(self.node(idx).capture(sw))
        }
    }

    fn req_arrive(&mut self, now: SimTime, round: u64, t_b1: SimTime) -> Result<(), RunError> {
        let a = self.a;
        self.node(a).advance(now);
        let t_a2 = self.master_stamp(a)?;
        let departs = now + self.processing_delay();
        self.queue
            .schedule(departs, Ev::RespDepart { round, t_b1, t_a2 });
        Ok(())
    }

    fn resp_depart(
        &mut self,
        now: SimTime,
        round: u64,
        t_b1: SimTime,
        t_a2: SimTime,
    ) -> Result<(), RunError> {
        let a = self.a;
        self.node(a).advance(now);
        let t_a3 = self.master_stamp(a)?;
        if self.leg_dropped() {
            self.rounds_dropped += 1;
            debug!("round {round}: response dropped");
            self.schedule_next_round(round);
            return Ok(());
        }
        let d = self.leg_delay(Direction::Forward);
        self.queue.schedule(
            now + d,
            Ev::RespArrive {
                round,
                t_b1,
                t_a2,
                t_a3,
            },
        );
        Ok(())
    }

    fn resp_arrive(
        &mut self,
        now: SimTime,
        round: u64,
        t_b1: SimTime,
        t_a2: SimTime,
        t_a3: SimTime,
    ) -> Result<(), RunError> {
        let sw = self.protocol.sw_jitter_hi_ps;
        let b = self.b;
        self.node(b).advance(now);
        let t_b4 = self.node(b).capture(sw);
        match two_way_estimate(&FourWayTimestamps {
            t_b1,
            t_a2,
            t_a3,
            t_b4,
        }) {
            Ok(est) => {
                if est.flag.is_some() {
                    warn!("round {round}: flagged estimate {:?}", est.flag);
                }
                self.apply_discipline(now, est.delay, est.offset)?;
            }
            Err(e) => warn!("round {round}: estimate rejected: {e}"),
        }
        self.schedule_next_round(round);
        Ok(())
    }

    fn wr_resp_arrive(
        &mut self,
        now: SimTime,
        round: u64,
        t_b1: SimTime,
        t_a2: SimTime,
        t_a3: SimTime,
    ) -> Result<(), RunError> {
        let res = self.protocol.phase_resolution_ps;
        let b = self.b;
        self.node(b).advance(now);
        let t_b4 = self.node(b).capture_refined(res)?;
        let mut est = two_way_estimate(&FourWayTimestamps {
            t_b1,
            t_a2,
            t_a3,
            t_b4,
        })?;
        if let Some(Medium::Fiber(f)) = &self.medium {
            if let Some(asym) = f.calibrated_asymmetry {
                let corr = asym.half_toward_zero();
                est.offset -= corr;
                est.asymmetry_correction_applied = corr;
            }
        }
        self.wr_offsets.push(est.offset.ps());
        if self.wr_offsets.len() >= self.protocol.wr_window {
            let mean = (self.wr_offsets.iter().map(|&o| o as i128).sum::<i128>()
                / self.wr_offsets.len() as i128) as i64;
            self.node(b).clock.step_phase(SimDuration::from_ps(-mean))?;
            self.wr_offsets.clear();
            self.rounds_completed += 1;
            debug!("wr round {round}: phase step {} ps", -mean);
        }
        self.schedule_next_round(round);
        Ok(())
    }

    // ------------------------------------------------------------------
    // TWSTT: simultaneous edge-triggered transmissions
    // ------------------------------------------------------------------

    fn twstt_plan(&mut self, now: SimTime, round: u64) -> Result<(), RunError> {
        // Both nodes aim to transmit when their local clock reads the shared
        // mark. Planning starts half an interval early so even a badly offset
        // clock's send instant is still ahead of now.
        let mark = self.round_start(round);
        self.twstt_round = round;
        self.twstt_tau = [None, None];
        for node in [self.a, self.b] {
            self.queue.schedule(
                now,
                Ev::TwsttSend {
                    round,
                    node,
                    target_local: mark,
                    attempts: 0,
                },
            );
        }
        let next_plan = self.round_start(round + 1) - self.interval.half_toward_zero();
        if self.round_start(round + 1) <= self.horizon {
            self.queue.schedule(next_plan, Ev::TwsttPlan { round: round + 1 });
        }
        Ok(())
    }

    fn twstt_send(
        &mut self,
        now: SimTime,
        round: u64,
        node: usize,
        target_local: SimTime,
        attempts: u8,
    ) -> Result<(), RunError> {
        self.node(node).advance(now);
        let local = self.nodes[node].clock.local_time();
        let remaining = (target_local - local).ps();
        if remaining > 10 && attempts < 4 {
            // Predict the physical instant the local clock crosses the mark
            // from the current rate, then re-check there.
            let rate = self.nodes[node].clock.total_frac_freq();
            let dt = (remaining as f64 / (1.0 + rate)).round().max(1.0) as i64;
            self.queue.schedule(
                now + SimDuration::from_ps(dt),
                Ev::TwsttSend {
                    round,
                    node,
                    target_local,
                    attempts: attempts + 1,
                },
            );
            return Ok(());
        }
        let dir = if node == self.a {
            Direction::Forward
        } else {
            Direction::Backward
        };
        if self.leg_dropped() {
            self.rounds_dropped += 1;
            return Ok(());
        }
        let d = self.leg_delay(dir);
        let other = if node == self.a { self.b } else { self.a };
        self.queue.schedule(
            now + d,
            Ev::TwsttArrive {
                round,
                at: other,
                mark_local: target_local,
            },
        );
        Ok(())
    }

    fn twstt_arrive(
        &mut self,
        now: SimTime,
        round: u64,
        at: usize,
        mark_local: SimTime,
    ) -> Result<(), RunError> {
        if round != self.twstt_round {
            return Ok(());
        }
        self.node(at).advance(now);
        let tau = self.node(at).tic_reading() - mark_local;
        let slot = if at == self.a { 0 } else { 1 };
        self.twstt_tau[slot] = Some(tau);
        if self.twstt_tau.iter().all(|t| t.is_some()) {
            // The measured intervals are exchanged over the packet path.
            if self.leg_dropped() {
                self.rounds_dropped += 1;
            } else {
                let d = self.leg_delay(Direction::Forward);
                self.queue.schedule(now + d, Ev::TwsttDone { round });
            }
        }
        Ok(())
    }

    fn twstt_done(&mut self, done_at: SimTime, round: u64) -> Result<(), RunError> {
        if round != self.twstt_round {
            return Ok(());
        }
        if let [Some(tau_a), Some(tau_b)] = self.twstt_tau {
            match twstt_estimate(&IntervalPair { tau_a, tau_b }) {
                Ok(est) => self.apply_discipline(done_at, est.delay, est.offset)?,
                Err(e) => warn!("twstt round {round}: {e}"),
            }
        }
        Ok(())
    }

    // ------------------------------------------------------------------
    // Round-trip (loop-back) method
    // ------------------------------------------------------------------

    fn rt_kickoff(&mut self, now: SimTime, round: u64) -> Result<(), RunError> {
        let b = self.b;
        self.node(b).advance(now);
        let t_tx = self.node(b).tic_reading();
        if self.leg_dropped() {
            self.rounds_dropped += 1;
            self.schedule_next_round(round);
            return Ok(());
        }
        let d = self.leg_delay(Direction::Backward);
        self.queue.schedule(now + d, Ev::RtReflect { round, t_tx });
        Ok(())
    }

    fn rt_reflect(&mut self, now: SimTime, round: u64, t_tx: SimTime) -> Result<(), RunError> {
        // Reflection is instant unless a processing delay is configured; an
        // uncompensated reflection delay biases the delay estimate.
        let departs = now + self.processing_delay();
        if self.leg_dropped() {
            self.rounds_dropped += 1;
            self.schedule_next_round(round);
            return Ok(());
        }
        let d = self.leg_delay(Direction::Forward);
        self.queue.schedule(departs + d, Ev::RtPong { round, t_tx });
        Ok(())
    }

    fn rt_pong(&mut self, now: SimTime, round: u64, t_tx: SimTime) -> Result<(), RunError> {
        let sw = self.protocol.sw_jitter_hi_ps;
        let (a, b) = (self.a, self.b);
        self.node(b).advance(now);
        let tau = self.node(b).tic_reading() - t_tx;
        // One-way follow-up: A stamps a message to B.
        self.node(a).advance(now);
        let t_a = self.node(a).capture(sw);
        if self.leg_dropped() {
            self.rounds_dropped += 1;
            self.schedule_next_round(round);
            return Ok(());
        }
        let d = self.leg_delay(Direction::Forward);
        self.queue
            .schedule(now + d, Ev::RtOneWayArrive { round, tau, t_a });
        Ok(())
    }

    fn rt_one_way_arrive(
        &mut self,
        now: SimTime,
        round: u64,
        tau: SimDuration,
        t_a: SimTime,
    ) -> Result<(), RunError> {
        let sw = self.protocol.sw_jitter_hi_ps;
        let b = self.b;
        self.node(b).advance(now);
        let t_b = self.node(b).capture(sw);
        match round_trip_estimate(&RoundTripRecord { tau, t_a, t_b }) {
            Ok(est) => self.apply_discipline(now, est.delay, est.offset)?,
            Err(e) => warn!("round-trip round {round}: {e}"),
        }
        self.schedule_next_round(round);
        Ok(())
    }

    // ------------------------------------------------------------------
    // GNSS one-way epochs
    // ------------------------------------------------------------------

    fn gnss_epoch(&mut self, now: SimTime, round: u64) -> Result<(), RunError> {
        let rx = self.b;
        self.node(rx).advance(now);
        let offset_true = self.nodes[rx].clock.local_time() - now;
        let state = self.gnss.as_mut().expect("gnss state");
        let observations: Vec<SatelliteObservation> = state
            .satellites
            .iter()
            .map(|&sat| {
                let noise_ps = if state.noise_rms_ps > 0.0 {
                    (state.noise_rng.sample::<f64, _>(StandardNormal) * state.noise_rms_ps)
                        .round() as i64
                } else {
                    0
                };
                SatelliteObservation {
                    position_m: sat,
                    send_time: now,
                    measured_delay: flight_time(sat, state.receiver_position_m)
                        + offset_true
                        + state.cable_ps
                        + SimDuration::from_ps(noise_ps),
                }
            })
            .collect();
        let compensate = state.compensate && state.cable.is_some();
        let cable = state.cable.clone();
        match gnss_solve(&observations, None) {
            Ok(solution) => {
                let solution = if compensate {
                    compensate_cable(solution, cable.as_ref().unwrap())?
                } else {
                    solution
                };
                self.apply_discipline(now, SimDuration::ZERO, solution.clock_offset)?;
            }
            Err(e) => warn!("gnss epoch {round}: solve failed: {e}"),
        }
        self.schedule_next_round(round);
        Ok(())
    }
}

/// Execute a validated scenario to its horizon.
pub fn run_scenario(scn: &Scenario) -> Result<RunOutcome, RunError> {
    let factory = RngFactory::new(scn.seed);
    let horizon = SimTime::ZERO + scn.duration;

    let mut nodes = Vec::with_capacity(scn.nodes.len());
    for n in &scn.nodes {
        let mut preset_rng = factory.stream(&format!("node.{}.preset", n.name));
        let model = Scenario::oscillator_model(&n.oscillator, &mut preset_rng);
        let mode = scn.protocol.timestamping.unwrap_or(match scn.protocol.kind {
            ProtocolKind::PtpHw | ProtocolKind::WhiteRabbit => TimestampMode::Hw,
            _ => n.timestamping,
        });
        nodes.push(NodeSim {
            name: n.name.clone(),
            clock: ClockState::new(model, SimDuration::from_ps(n.epoch_offset_ps)),
            mode,
            osc_rng: factory.stream(&format!("node.{}.osc", n.name)),
            stamp_rng: factory.stream(&format!("node.{}.swstamp", n.name)),
            last_sw_stamp: SimTime::from_ps(i64::MIN / 2),
            series: ErrorSeries::new(SimTime::ZERO, scn.cadence),
        });
    }

    let (a, b) = match scn.link {
        Some((a, b, _)) => (a, b),
        None => (0, 0),
    };
    let mut medium = scn.link.as_ref().map(|(_, _, m)| m.clone());

    // White Rabbit pre-calibration runs offline on clones, leaving the run's
    // clocks and noise streams untouched.
    if scn.protocol.kind == ProtocolKind::WhiteRabbit && scn.protocol.calibrate_rounds > 0 {
        if let Some(Medium::Fiber(fiber)) = &medium {
            let mut cal_master = nodes[a].clock.clone();
            let mut cal_slave = nodes[b].clock.clone();
            let mut mr = factory.stream("wr.calibration.master");
            let mut sr = factory.stream("wr.calibration.slave");
            let reference = cal_slave.local_time() - cal_master.local_time();
            let wr_cfg = WrConfig {
                link_period_ps: cal_slave.model().period_ps(),
                phase_resolution_ps: scn.protocol.phase_resolution_ps,
                turnaround: SimDuration::from_ps(
                    scn.protocol.processing_delay_ps.unwrap_or(1_000_000).max(1_000_000),
                ),
            };
            let calibrated = calibrate_link(
                SimTime::ZERO + SimDuration::from_millis(1),
                &mut cal_master,
                &mut cal_slave,
                fiber,
                reference,
                &wr_cfg,
                scn.protocol.calibrate_rounds,
                &mut mr,
                &mut sr,
            )?;
            info!(
                "calibrated fiber asymmetry: {}",
                calibrated.calibrated_asymmetry.unwrap()
            );
            medium = Some(Medium::Fiber(calibrated));
        }
    }

    let servo = match scn.protocol.kind {
        ProtocolKind::WhiteRabbit => None,
        _ => {
            let cfg = scn.protocol.servo.unwrap_or_default();
            Some(ServoState::attach(nodes[b].clock.model(), cfg)?)
        }
    };

    let gnss = match scn.protocol.kind {
        ProtocolKind::Gnss => {
            let g = scn.protocol.gnss.as_ref().expect("validated");
            let receiver = g.receiver_position_m.unwrap_or([EARTH_RADIUS_M, 0.0, 0.0]);
            let mut con_rng = factory.stream("gnss.constellation");
            let cable_ps = match &g.cable {
                Some(c) => cable_delay(c).map_err(|e| RunError::Internal(e.to_string()))?,
                None => SimDuration::ZERO,
            };
            Some(GnssState {
                satellites: synthetic_constellation(&mut con_rng, g.satellites, receiver),
                receiver_position_m: receiver,
                noise_rng: factory.stream("gnss.noise"),
                noise_rms_ps: g.pseudorange_noise_ps,
                cable_ps,
                cable: g.cable.clone(),
                compensate: g.compensate_cable,
            })
        }
        _ => None,
    };

    let interval = SimDuration::from_ps(scn.protocol.exchange_interval_ps);
    let mut runner = Runner {
        queue: EventQueue::new(),
        nodes,
        protocol: scn.protocol.clone(),
        horizon,
        cadence: scn.cadence,
        interval,
        a,
        b,
        medium,
        link_rng: factory.stream("link.0"),
        servo,
        filter: VecDeque::new(),
        stepped_once: false,
        last_discipline_at: None,
        wr_offsets: Vec::new(),
        twstt_tau: [None, None],
        twstt_round: 0,
        gnss,
        rounds_completed: 0,
        rounds_dropped: 0,
    };

    // Seed the queue: sampling from t = 0, first exchange one interval in.
    runner.queue.schedule(SimTime::ZERO, Ev::Sample);
    let first = runner.round_start(0);
    if first <= horizon {
        match scn.protocol.kind {
            ProtocolKind::Gnss => runner.queue.schedule(first, Ev::GnssEpoch { round: 0 }),
            ProtocolKind::Twstt => {
                let plan = first - interval.half_toward_zero();
                runner.queue.schedule(plan, Ev::TwsttPlan { round: 0 });
            }
            _ => runner.queue.schedule(first, Ev::Kickoff { round: 0 }),
        }
    }

    while let Some((t, ev)) = runner.queue.pop() {
        if t > horizon {
            continue;
        }
        runner.handle(t, ev)?;
    }

    info!(
        "run complete: {} rounds disciplined, {} legs dropped",
        runner.rounds_completed, runner.rounds_dropped
    );

    let mut node_reports = Vec::new();
    let mut series_out = Vec::new();
    for node in runner.nodes {
        let full = StabilityReport::from_series(&node.series)?;
        let steady = summarize(&node.series.tail_fraction(scn.steady_fraction))?;
        node_reports.push(NodeReport {
            name: node.name.clone(),
            full,
            steady_state: steady,
        });
        series_out.push((node.name, node.series));
    }

    let report = RunReport {
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: scn.seed,
        protocol: scn.protocol.kind.name().to_string(),
        duration_ps: scn.duration.ps(),
        sample_cadence_ps: scn.cadence.ps(),
        steady_fraction: scn.steady_fraction,
        nodes: node_reports,
        scenario: scn.echo.clone(),
    };
    Ok(RunOutcome {
        report,
        series: series_out,
    })
}
