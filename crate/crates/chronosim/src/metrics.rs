//! Synchronization-quality metrics: offset-error series, exact summary
//! statistics, and overlapping Allan deviation.
//!
//! The Allan deviation is computed with the overlapping estimator
//! `sigma_y^2(tau) = 1/(2 (N−2m) tau^2) * sum (x_{i+2m} − 2 x_{i+m} + x_i)^2`,
//! with the second differences taken in exact integer picoseconds before any
//! float enters. That makes the estimator exactly invariant under adding a
//! constant or a pure linear ramp to the phase samples.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::timebase::{SimDuration, SimTime};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricsError {
    #[error("cannot summarize an empty series")]
    EmptySeries,
    #[error("tau {tau_ps} ps is not a positive multiple of the sample interval {tau0_ps} ps")]
    TauNotMultiple { tau_ps: i64, tau0_ps: i64 },
    #[error("series of {len} samples is too short for m={m} (needs at least 3m+1)")]
    SeriesTooShort { len: usize, m: usize },
}

/// Offset error of one clock against simulation ground truth, sampled at a
/// fixed cadence. Times are implied by `start + k * cadence`, which keeps the
/// series exactly uniform and strictly increasing by construction.
#[derive(Clone, Debug, PartialEq)]
pub struct ErrorSeries {
    pub start: SimTime,
    pub cadence: SimDuration,
    pub samples_ps: Vec<i64>,
}

impl ErrorSeries {
    pub fn new(start: SimTime, cadence: SimDuration) -> Self {
        assert!(cadence.is_positive(), "series cadence must be positive");
        Self {
            start,
            cadence,
            samples_ps: Vec::new(),
        }
    }

    pub fn push(&mut self, error: SimDuration) {
        self.samples_ps.push(error.ps());
    }

    pub fn len(&self) -> usize {
        self.samples_ps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples_ps.is_empty()
    }

    pub fn time_at(&self, index: usize) -> SimTime {
        self.start + self.cadence.scaled(index as i64)
    }

    pub fn iter(&self) -> impl Iterator<Item = (SimTime, SimDuration)> + '_ {
        self.samples_ps
            .iter()
            .enumerate()
            .map(|(i, &e)| (self.time_at(i), SimDuration::from_ps(e)))
    }

    /// The tail of the series (steady-state window): the final `fraction` of
    /// the samples.
    pub fn tail_fraction(&self, fraction: f64) -> ErrorSeries {
        let keep = ((self.len() as f64) * fraction).ceil() as usize;
        let skip = self.len().saturating_sub(keep.max(1));
        ErrorSeries {
            start: self.time_at(skip),
            cadence: self.cadence,
            samples_ps: self.samples_ps[skip..].to_vec(),
        }
    }

    /// Serialize as two-column CSV with the `t_ps,offset_error_ps` header.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(24 * self.len() + 24);
        out.push_str("t_ps,offset_error_ps\n");
        for (t, e) in self.iter() {
            out.push_str(&format!("{},{}\n", t.ps(), e.ps()));
        }
        out
    }
}

/// Exact integer summary statistics of an error series. The mean and RMS
/// round toward zero; the RMS uses full-width integer accumulation so no
/// sample order or magnitude loses precision.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub max_abs_error_ps: i64,
    pub mean_error_ps: i64,
    pub rms_error_ps: i64,
}

pub fn summarize(series: &ErrorSeries) -> Result<SummaryStats, MetricsError> {
    if series.is_empty() {
        return Err(MetricsError::EmptySeries);
    }
    let n = series.len() as i128;
    let mut max_abs: i64 = 0;
    let mut sum: i128 = 0;
    let mut sum_sq: u128 = 0;
    for &e in &series.samples_ps {
        max_abs = max_abs.max(e.abs());
        sum += e as i128;
        sum_sq += (e as i128 * e as i128) as u128;
    }
    let mean = (sum / n) as i64;
    let rms = (sum_sq / n as u128).isqrt() as i64;
    Ok(SummaryStats {
        max_abs_error_ps: max_abs,
        mean_error_ps: mean,
        rms_error_ps: rms,
    })
}

/// One Allan-deviation point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdevPoint {
    pub tau_s: f64,
    pub adev: f64,
}

/// Overlapping Allan deviation of integer-picosecond phase samples taken at
/// interval `tau0`, evaluated per requested tau. Requests that are not a
/// multiple of `tau0` or exceed what the series length supports yield a
/// per-tau error instead of poisoning the whole call.
pub fn allan_deviation(
    phase_ps: &[i64],
    tau0: SimDuration,
    taus: &[SimDuration],
) -> Vec<(SimDuration, Result<f64, MetricsError>)> {
    taus.iter()
        .map(|&tau| (tau, allan_deviation_at(phase_ps, tau0, tau)))
        .collect()
}

fn allan_deviation_at(
    phase_ps: &[i64],
    tau0: SimDuration,
    tau: SimDuration,
) -> Result<f64, MetricsError> {
    let tau0_ps = tau0.ps();
    let tau_ps = tau.ps();
    if tau_ps <= 0 || tau0_ps <= 0 || tau_ps % tau0_ps != 0 {
        return Err(MetricsError::TauNotMultiple { tau_ps, tau0_ps });
    }
    let m = (tau_ps / tau0_ps) as usize;
    let n = phase_ps.len();
    if n < 3 * m + 1 {
        return Err(MetricsError::SeriesTooShort { len: n, m });
    }
    let terms = n - 2 * m;
    // Second differences and their squared sum in exact integer arithmetic;
    // constants and linear ramps cancel identically, and the sum is
    // order-independent.
    let mut sum: u128 = 0;
    for i in 0..terms {
        let d = phase_ps[i + 2 * m] as i128 - 2 * phase_ps[i + m] as i128 + phase_ps[i] as i128;
        sum += (d * d) as u128;
    }
    let tau_s = tau.as_secs_f64();
    let var = sum as f64 * 1e-24 / (2.0 * terms as f64 * tau_s * tau_s);
    Ok(var.sqrt())
}

/// The power-of-two tau ladder supported by a series of `n` samples:
/// m in {1, 2, 4, ...} while the overlapping estimator keeps at least a third
/// of the series (m <= n/3).
pub fn adev_ladder(n: usize, tau0: SimDuration) -> Vec<SimDuration> {
    let mut taus = Vec::new();
    let mut m = 1usize;
    while 3 * m <= n.saturating_sub(1) {
        taus.push(tau0.scaled(m as i64));
        m *= 2;
    }
    taus
}

/// Summary statistics plus the Allan-deviation ladder for a report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub max_abs_error_ps: i64,
    pub mean_error_ps: i64,
    pub rms_error_ps: i64,
    pub adev: Vec<AdevPoint>,
}

impl StabilityReport {
    pub fn from_series(series: &ErrorSeries) -> Result<Self, MetricsError> {
        let stats = summarize(series)?;
        let taus = adev_ladder(series.len(), series.cadence);
        let adev = allan_deviation(&series.samples_ps, series.cadence, &taus)
            .into_iter()
            .filter_map(|(tau, res)| {
                res.ok().map(|a| AdevPoint {
                    tau_s: tau.as_secs_f64(),
                    adev: a,
                })
            })
            .collect();
        Ok(Self {
            max_abs_error_ps: stats.max_abs_error_ps,
            mean_error_ps: stats.mean_error_ps,
            rms_error_ps: stats.rms_error_ps,
            adev,
        })
    }
}
