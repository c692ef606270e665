//! Oscillator and clock models.
//!
//! A clock is an oscillator plus a counter. The oscillator's instantaneous
//! fractional frequency is the sum of a deterministic part (constant bias,
//! aging, temperature sensitivity) and a random-walk component; white phase
//! noise perturbs individual readings rather than the accumulated time.
//!
//! Local time is accumulated in exact integer picoseconds. Each advance step
//! rounds the fractional-frequency contribution to the nearest picosecond and
//! carries the sub-picosecond remainder forward, so no systematic rounding
//! bias builds up over a run.

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::timebase::{
    quantize_event, SimDuration, SimTime, Timestamp, PS_PER_SECOND,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OscillatorError {
    #[error("oscillator has no tuning port; cannot attach a servo or steer it")]
    NotTunable,
    #[error("invalid oscillator model: {0}")]
    InvalidModel(String),
    #[error("servo interval must be positive")]
    NonPositiveInterval,
    #[error("local counter is negative ({0} ps); the clock epoch offset puts the reading before the counter origin")]
    NegativeLocalTime(i64),
}

/// Parameters of a free-running oscillator.
///
/// `freq_bias` is the dimensionless fractional frequency offset (20e-6 for a
/// +20 ppm part). `rw_freq_step` is the standard deviation of the random-walk
/// fractional-frequency increment per square-root second. White phase noise is
/// the per-reading jitter applied when a timestamp is captured.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OscillatorModel {
    pub nominal_hz: f64,
    #[serde(default)]
    pub freq_bias: f64,
    #[serde(default)]
    pub aging_per_s: f64,
    #[serde(default)]
    pub temp_coeff: f64,
    #[serde(default)]
    pub white_phase_noise_ps: f64,
    #[serde(default)]
    pub rw_freq_step: f64,
    #[serde(default = "default_true")]
    pub tunable: bool,
}

fn default_true() -> bool {
    true
}

impl OscillatorModel {
    /// A perfect oscillator at the given nominal frequency.
    pub fn ideal(nominal_hz: f64) -> Self {
        Self {
            nominal_hz,
            freq_bias: 0.0,
            aging_per_s: 0.0,
            temp_coeff: 0.0,
            white_phase_noise_ps: 0.0,
            rw_freq_step: 0.0,
            tunable: true,
        }
    }

    pub fn validate(&self) -> Result<(), OscillatorError> {
        if !(self.nominal_hz > 0.0) {
            return Err(OscillatorError::InvalidModel(format!(
                "nominal_hz must be positive, got {}",
                self.nominal_hz
            )));
        }
        if self.white_phase_noise_ps < 0.0 || self.rw_freq_step < 0.0 {
            return Err(OscillatorError::InvalidModel(
                "noise parameters must be non-negative".into(),
            ));
        }
        Ok(())
    }

    /// Nominal period in integer picoseconds (8000 ps at 125 MHz, 100000 ps at
    /// 10 MHz).
    pub fn period_ps(&self) -> i64 {
        (PS_PER_SECOND as f64 / self.nominal_hz).round() as i64
    }
}

/// Stability-class presets. The names appear verbatim in scenario config
/// files.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum OscillatorClass {
    Xo,
    Ocxo,
    Rubidium,
    CesiumClass,
    GnssDisciplined,
}

impl OscillatorClass {
    pub const NAMES: [&'static str; 5] =
        ["XO", "OCXO", "RUBIDIUM", "CESIUM_CLASS", "GNSS_DISCIPLINED"];

    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "XO" => Some(Self::Xo),
            "OCXO" => Some(Self::Ocxo),
            "RUBIDIUM" => Some(Self::Rubidium),
            "CESIUM_CLASS" => Some(Self::CesiumClass),
            "GNSS_DISCIPLINED" => Some(Self::GnssDisciplined),
            _ => None,
        }
    }

    /// Instantiate the preset. The XO preset draws its frequency bias
    /// uniformly in ±50 ppm from the supplied stream; the other presets are
    /// fixed parameter sets.
    pub fn model(self, rng: &mut ChaCha12Rng) -> OscillatorModel {
        match self {
            // Plain quartz: bias in the tens of ppm, good short-term
            // stability, drifts long-term.
            Self::Xo => OscillatorModel {
                nominal_hz: 125e6,
                freq_bias: rng.gen_range(-50e-6..=50e-6),
                aging_per_s: 0.0,
                temp_coeff: 1e-6,
                white_phase_noise_ps: 10.0,
                rw_freq_step: 1e-10,
                tunable: true,
            },
            Self::Ocxo => OscillatorModel {
                nominal_hz: 10e6,
                freq_bias: 1e-8,
                aging_per_s: 0.0,
                temp_coeff: 1e-9,
                white_phase_noise_ps: 5.0,
                rw_freq_step: 1e-11,
                tunable: true,
            },
            Self::Rubidium => OscillatorModel {
                nominal_hz: 10e6,
                freq_bias: 1e-11,
                aging_per_s: 0.0,
                temp_coeff: 1e-11,
                white_phase_noise_ps: 5.0,
                // Calibrated so the Allan deviation sits in the 1e-11 class
                // at tau = 1000 s (sigma_y(tau) ~ step * sqrt(tau/3)).
                rw_freq_step: 5.5e-13,
                tunable: true,
            },
            Self::CesiumClass => OscillatorModel {
                nominal_hz: 10e6,
                freq_bias: 1e-13,
                aging_per_s: 0.0,
                temp_coeff: 0.0,
                white_phase_noise_ps: 5.0,
                rw_freq_step: 1e-14,
                tunable: true,
            },
            // A GNSS-disciplined clock in steady state: residual bias in the
            // 1e-11 class from the disciplining loop, quiet short-term.
            Self::GnssDisciplined => OscillatorModel {
                nominal_hz: 10e6,
                freq_bias: 1e-11,
                aging_per_s: 0.0,
                temp_coeff: 1e-10,
                white_phase_noise_ps: 10.0,
                rw_freq_step: 1e-12,
                tunable: true,
            },
        }
    }
}

/// Environment temperature as a piecewise-linear function of simulation time.
/// The default profile is constant at the reference, which makes the
/// temperature term inert.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemperatureProfile {
    pub ref_kelvin: f64,
    /// Breakpoints (time, kelvin), strictly increasing in time. Before the
    /// first and after the last point the profile is held constant.
    pub points: Vec<(SimTime, f64)>,
}

impl TemperatureProfile {
    pub fn constant(kelvin: f64) -> Self {
        Self {
            ref_kelvin: kelvin,
            points: vec![],
        }
    }

    pub fn at(&self, t: SimTime) -> f64 {
        if self.points.is_empty() {
            return self.ref_kelvin;
        }
        let first = self.points[0];
        if t <= first.0 {
            return first.1;
        }
        let last = *self.points.last().unwrap();
        if t >= last.0 {
            return last.1;
        }
        for w in self.points.windows(2) {
            let (t0, v0) = w[0];
            let (t1, v1) = w[1];
            if t >= t0 && t <= t1 {
                let frac = (t - t0).ps() as f64 / (t1 - t0).ps() as f64;
                return v0 + frac * (v1 - v0);
            }
        }
        last.1
    }

    /// Integral of (T(t) - T_ref) over [from, to], in kelvin-seconds.
    /// Exact for the piecewise-linear profile (trapezoid on each segment).
    pub fn integral_dev(&self, from: SimTime, to: SimTime) -> f64 {
        if self.points.is_empty() || from >= to {
            return 0.0;
        }
        // Collect breakpoints inside the interval and integrate trapezoids.
        let mut knots = vec![from];
        for &(t, _) in &self.points {
            if t > from && t < to {
                knots.push(t);
            }
        }
        knots.push(to);
        let mut acc = 0.0;
        for w in knots.windows(2) {
            let dt_s = (w[1] - w[0]).as_secs_f64();
            let mean_dev =
                0.5 * (self.at(w[0]) + self.at(w[1])) - self.ref_kelvin;
            acc += mean_dev * dt_s;
        }
        acc
    }

    pub fn max_abs_dev(&self) -> f64 {
        self.points
            .iter()
            .map(|&(_, v)| (v - self.ref_kelvin).abs())
            .fold(0.0, f64::max)
    }
}

/// The full state of one simulated clock: the oscillator model plus the
/// counter built on it.
#[derive(Clone, Debug)]
pub struct ClockState {
    model: OscillatorModel,
    /// Local reading in picoseconds (includes the initial epoch offset).
    local_ps: i64,
    /// Sub-picosecond remainder carried between advance steps.
    carry: f64,
    /// Random-walk fractional-frequency state.
    rw_frac: f64,
    /// Servo-applied fractional-frequency correction.
    steer: f64,
    /// Syntonization override: when set, the oscillator's output rate is
    /// frequency-locked to this total fractional frequency (SyncE-style).
    rate_lock: Option<f64>,
    /// Total fractional frequency used over the last advance step.
    current_frac_freq: f64,
    last_update: SimTime,
    /// Jittered reading already produced at `last_update`: two captures of
    /// the same instant see the same oscillator edge, hence the same jitter.
    reading_cache: Option<(SimTime, i64)>,
}

impl ClockState {
    pub fn new(model: OscillatorModel, epoch_offset: SimDuration) -> Self {
        model.validate().expect("invalid oscillator model");
        Self {
            model,
            local_ps: epoch_offset.ps(),
            carry: 0.0,
            rw_frac: 0.0,
            steer: 0.0,
            rate_lock: None,
            current_frac_freq: 0.0,
            last_update: SimTime::ZERO,
            reading_cache: None,
        }
    }

    pub fn model(&self) -> &OscillatorModel {
        &self.model
    }

    pub fn last_update(&self) -> SimTime {
        self.last_update
    }

    /// The clock's local reading at `last_update`, exact.
    pub fn local_time(&self) -> SimTime {
        SimTime::from_ps(self.local_ps)
    }

    /// Offset of this clock's reading from physical time, exact.
    pub fn offset_from_truth(&self) -> SimDuration {
        self.local_time() - self.last_update
    }

    /// Fractional frequency the oscillator would run at right now,
    /// before any new noise step. This is what a frequency-locked
    /// downstream clock reproduces.
    pub fn total_frac_freq(&self) -> f64 {
        if let Some(r) = self.rate_lock {
            return r;
        }
        let t_s = self.last_update.as_secs_f64();
        self.model.freq_bias + self.model.aging_per_s * t_s + self.rw_frac + self.steer
    }

    /// Advance the clock to physical time `to`, integrating the fractional
    /// frequency over the interval. Deterministic given the RNG stream.
    ///
    /// The random-walk step is drawn once per advance (scaled by sqrt(dt))
    /// and treated as constant over the interval.
    pub fn advance(
        &mut self,
        to: SimTime,
        temperature: Option<&TemperatureProfile>,
        rng: &mut ChaCha12Rng,
    ) {
        assert!(
            to >= self.last_update,
            "clock advance must be monotonic: {to} < {}",
            self.last_update
        );
        if to == self.last_update {
            return;
        }
        let dt_ps = (to - self.last_update).ps();
        let dt_s = dt_ps as f64 / PS_PER_SECOND as f64;

        if self.model.rw_freq_step > 0.0 {
            let z: f64 = rng.sample(StandardNormal);
            self.rw_frac += z * self.model.rw_freq_step * dt_s.sqrt();
        }

        // Fractional excess local time over the step, in seconds.
        let frac_s = match self.rate_lock {
            Some(rate) => rate * dt_s,
            None => {
                let t0_s = self.last_update.as_secs_f64();
                let t1_s = to.as_secs_f64();
                let mut acc = self.model.freq_bias * dt_s;
                if self.model.aging_per_s != 0.0 {
                    acc += self.model.aging_per_s * 0.5 * (t1_s * t1_s - t0_s * t0_s);
                }
                if self.model.temp_coeff != 0.0 {
                    if let Some(profile) = temperature {
                        acc += self.model.temp_coeff
                            * profile.integral_dev(self.last_update, to);
                    }
                }
                acc + (self.rw_frac + self.steer) * dt_s
            }
        };
        self.current_frac_freq = frac_s / dt_s;

        let acc = self.carry + frac_s * PS_PER_SECOND as f64;
        let inc = acc.round();
        self.carry = acc - inc;
        self.local_ps = self
            .local_ps
            .checked_add(dt_ps)
            .and_then(|v| v.checked_add(inc as i64))
            .expect("local time overflow: simulation horizon exceeds the picosecond range");
        self.last_update = to;
    }

    /// The counter value at `last_update`, at the oscillator's nominal period.
    pub fn read_local(&self) -> Result<Timestamp, OscillatorError> {
        if self.local_ps < 0 {
            return Err(OscillatorError::NegativeLocalTime(self.local_ps));
        }
        Ok(quantize_event(
            self.local_time(),
            self.model.period_ps(),
            SimTime::ZERO,
        )
        .expect("period validated at construction"))
    }

    /// Number of whole oscillator periods elapsed on the local counter.
    pub fn tick_count(&self) -> Result<u64, OscillatorError> {
        self.read_local().map(|ts| ts.ticks)
    }

    /// A reading perturbed by the oscillator's white phase noise. This models
    /// the per-edge jitter a capture circuit sees. Repeated reads at the same
    /// instant observe the same edge and return the same value.
    pub fn sample_reading(&mut self, rng: &mut ChaCha12Rng) -> SimTime {
        if self.model.white_phase_noise_ps == 0.0 {
            return self.local_time();
        }
        if let Some((at, value)) = self.reading_cache {
            if at == self.last_update {
                return SimTime::from_ps(value);
            }
        }
        let z: f64 = rng.sample(StandardNormal);
        let jitter = (z * self.model.white_phase_noise_ps).round() as i64;
        let reading = self.local_ps + jitter;
        self.reading_cache = Some((self.last_update, reading));
        SimTime::from_ps(reading)
    }

    /// Apply a servo frequency correction. Rejected for oscillators without a
    /// tuning port.
    pub fn set_steer(&mut self, frac_freq: f64) -> Result<(), OscillatorError> {
        if !self.model.tunable {
            return Err(OscillatorError::NotTunable);
        }
        self.steer = frac_freq;
        Ok(())
    }

    pub fn steer(&self) -> f64 {
        self.steer
    }

    /// Frequency-lock this clock's output rate to an upstream total
    /// fractional frequency (syntonization). Time offset is unaffected.
    pub fn lock_rate_to(&mut self, upstream_frac_freq: f64) -> Result<(), OscillatorError> {
        if !self.model.tunable {
            return Err(OscillatorError::NotTunable);
        }
        self.rate_lock = Some(upstream_frac_freq);
        Ok(())
    }

    pub fn unlock_rate(&mut self) {
        self.rate_lock = None;
    }

    pub fn is_rate_locked(&self) -> bool {
        self.rate_lock.is_some()
    }

    /// Adjust the counter by a phase step (fine phase adjustment of the
    /// local timescale).
    pub fn step_phase(&mut self, adjustment: SimDuration) -> Result<(), OscillatorError> {
        if !self.model.tunable {
            return Err(OscillatorError::NotTunable);
        }
        self.local_ps = self
            .local_ps
            .checked_add(adjustment.ps())
            .expect("local time overflow in phase step");
        self.reading_cache = None;
        Ok(())
    }

    /// Net frozen rate error if the reference were lost right now: the bias
    /// the clock would free-run with.
    pub fn residual_frac_bias(&self) -> f64 {
        self.total_frac_freq()
    }

    /// Closed-form worst-case free-running offset bound over `duration` after
    /// reference loss, from this clock's frozen residual rate and aging.
    pub fn holdover(&self, duration: SimDuration) -> SimDuration {
        let bound_s = holdover_bound_s(
            self.residual_frac_bias(),
            self.model.aging_per_s,
            duration.as_secs_f64(),
            None,
        );
        SimDuration::from_secs_f64(bound_s)
    }
}

/// Worst-case free-running drift bound:
/// `|bias| * d + 0.5 * |aging| * d^2 (+ |temp_coeff| * max_dev * d)`.
pub fn holdover_bound_s(
    residual_frac_bias: f64,
    aging_per_s: f64,
    duration_s: f64,
    temp_term: Option<(f64, f64)>, // (temp_coeff, max |T - T_ref|)
) -> f64 {
    let mut bound = residual_frac_bias.abs() * duration_s
        + 0.5 * aging_per_s.abs() * duration_s * duration_s;
    if let Some((coeff, max_dev)) = temp_term {
        bound += coeff.abs() * max_dev.abs() * duration_s;
    }
    bound
}

/// Inverse of [`holdover_bound_s`]: the holdover duration at which the bound
/// reaches `bound_s`. Multi-year answers exceed the integer picosecond range,
/// which is exactly why this is analytic rather than stepped.
pub fn holdover_time_to_bound_s(residual_frac_bias: f64, aging_per_s: f64, bound_s: f64) -> f64 {
    let b = residual_frac_bias.abs();
    let a = 0.5 * aging_per_s.abs();
    if a == 0.0 {
        return bound_s / b;
    }
    // a d^2 + b d - bound = 0
    (-b + (b * b + 4.0 * a * bound_s).sqrt()) / (2.0 * a)
}

/// Gains and limits of the PI servo that disciplines a tunable oscillator.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ServoConfig {
    pub kp: f64,
    pub ki: f64,
    /// Maximum |fractional frequency| correction the servo may apply.
    pub steer_limit: f64,
    /// Lock criterion: this many consecutive offset samples below the
    /// threshold.
    pub lock_threshold: SimDuration,
    pub lock_count: u32,
}

impl Default for ServoConfig {
    fn default() -> Self {
        Self {
            kp: 0.7,
            ki: 0.3,
            steer_limit: 1e-4,
            lock_threshold: SimDuration::from_micros(1),
            lock_count: 5,
        }
    }
}

/// PI servo state. Attach to a tunable oscillator model, then feed it one
/// measured offset per exchange interval.
#[derive(Clone, Debug)]
pub struct ServoState {
    pub config: ServoConfig,
    /// Accumulated offset integral, in seconds.
    pub integral_acc: f64,
    pub locked: bool,
    consecutive_good: u32,
}

impl ServoState {
    pub fn attach(model: &OscillatorModel, config: ServoConfig) -> Result<Self, OscillatorError> {
        if !model.tunable {
            return Err(OscillatorError::NotTunable);
        }
        Ok(Self {
            config,
            integral_acc: 0.0,
            locked: false,
            consecutive_good: 0,
        })
    }

    /// One PI update. Returns the fractional-frequency correction to apply
    /// (negative feedback: a positive offset steers the clock slower).
    ///
    /// While the output sits at the steer limit, integration that would push
    /// it further is withheld; otherwise a large lock-in transient winds the
    /// integral up and the loop limit-cycles around the clamp.
    pub fn step(
        &mut self,
        measured_offset: SimDuration,
        interval: SimDuration,
    ) -> Result<f64, OscillatorError> {
        if !interval.is_positive() {
            return Err(OscillatorError::NonPositiveInterval);
        }
        let off_s = measured_offset.as_secs_f64();
        self.integral_acc += off_s;
        let interval_s = interval.as_secs_f64();
        let lim = self.config.steer_limit;
        let raw = -(self.config.kp * off_s + self.config.ki * self.integral_acc) / interval_s;
        let correction = raw.clamp(-lim, lim);
        if raw != correction {
            let pushes_further = (raw > lim && off_s < 0.0) || (raw < -lim && off_s > 0.0);
            if pushes_further {
                self.integral_acc -= off_s;
            }
        }

        if measured_offset.abs() <= self.config.lock_threshold {
            self.consecutive_good += 1;
            if self.consecutive_good >= self.config.lock_count {
                self.locked = true;
            }
        } else {
            self.consecutive_good = 0;
            self.locked = false;
        }
        Ok(correction)
    }

    pub fn reset(&mut self) {
        self.integral_acc = 0.0;
        self.locked = false;
        self.consecutive_good = 0;
    }
}
