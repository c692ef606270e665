//! Media a time signal traverses: packet paths, optical fiber, antenna cable.
//!
//! What matters for synchronization is not the absolute delay of a medium but
//! how it varies and how asymmetric it is, so each model carries per-direction
//! base delays and an explicit jitter distribution. Asymmetry is always an
//! explicit input, never a hidden default.

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::Exp;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::timebase::{SimDuration, PS_PER_SECOND};

/// Speed of light in vacuum, m/s, exact.
pub const SPEED_OF_LIGHT_M_PER_S: f64 = 299_792_458.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("velocity factor must lie in (0, 1), got {0}")]
    InvalidVelocityFactor(f64),
    #[error("invalid path model: {0}")]
    InvalidPath(String),
}

/// Direction of a traversal over a two-endpoint medium. Forward is A-to-B,
/// where A is the link's first endpoint (the server/master side in the
/// two-way exchanges).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

/// Per-traversal delay variation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Jitter {
    #[default]
    None,
    /// Uniform integer-picosecond draw in [lo_ps, hi_ps].
    Uniform { lo_ps: i64, hi_ps: i64 },
    /// min_ps plus an exponential excess with the given mean; a heavy-ish
    /// queueing tail.
    ExponentialTail { min_ps: i64, mean_excess_ps: f64 },
}

impl Jitter {
    pub fn validate(&self) -> Result<(), ChannelError> {
        match *self {
            Jitter::None => Ok(()),
            Jitter::Uniform { lo_ps, hi_ps } => {
                if lo_ps < 0 {
                    Err(ChannelError::InvalidPath(format!(
                        "jitter lo_ps must be non-negative, got {lo_ps}"
                    )))
                } else if hi_ps < lo_ps {
                    Err(ChannelError::InvalidPath(format!(
                        "jitter hi_ps ({hi_ps}) below lo_ps ({lo_ps})"
                    )))
                } else {
                    Ok(())
                }
            }
            Jitter::ExponentialTail {
                min_ps,
                mean_excess_ps,
            } => {
                if min_ps < 0 || mean_excess_ps < 0.0 {
                    Err(ChannelError::InvalidPath(
                        "exponential-tail jitter parameters must be non-negative".into(),
                    ))
                } else {
                    Ok(())
                }
            }
        }
    }

    fn sample_ps(&self, rng: &mut ChaCha12Rng) -> i64 {
        match *self {
            Jitter::None => 0,
            Jitter::Uniform { lo_ps, hi_ps } => rng.gen_range(lo_ps..=hi_ps),
            Jitter::ExponentialTail {
                min_ps,
                mean_excess_ps,
            } => {
                if mean_excess_ps == 0.0 {
                    return min_ps;
                }
                let exp = Exp::new(1.0 / mean_excess_ps).expect("validated rate");
                min_ps + rng.sample::<f64, _>(exp).round() as i64
            }
        }
    }
}

/// A packet path with per-direction base delay, independent per-traversal
/// jitter, and a loss probability.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathModel {
    pub base_delay_fwd: SimDuration,
    pub base_delay_bwd: SimDuration,
    #[serde(default)]
    pub jitter: Jitter,
    #[serde(default)]
    pub drop_prob: f64,
}

impl PathModel {
    pub fn symmetric(base: SimDuration, jitter: Jitter) -> Self {
        Self {
            base_delay_fwd: base,
            base_delay_bwd: base,
            jitter,
            drop_prob: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        if !self.base_delay_fwd.is_positive() || !self.base_delay_bwd.is_positive() {
            return Err(ChannelError::InvalidPath(format!(
                "base delays must be positive, got fwd {} / bwd {}",
                self.base_delay_fwd, self.base_delay_bwd
            )));
        }
        if !(0.0..=1.0).contains(&self.drop_prob) {
            return Err(ChannelError::InvalidPath(format!(
                "drop_prob must lie in [0, 1], got {}",
                self.drop_prob
            )));
        }
        self.jitter.validate()
    }

    pub fn base_delay(&self, dir: Direction) -> SimDuration {
        match dir {
            Direction::Forward => self.base_delay_fwd,
            Direction::Backward => self.base_delay_bwd,
        }
    }

    /// Whether a message on this path is lost, one independent draw per
    /// message.
    pub fn dropped(&self, rng: &mut ChaCha12Rng) -> bool {
        self.drop_prob > 0.0 && rng.gen::<f64>() < self.drop_prob
    }
}

/// One traversal delay: the direction's base delay plus one jitter draw.
/// Never below the configured base.
pub fn sample_delay(path: &PathModel, dir: Direction, rng: &mut ChaCha12Rng) -> SimDuration {
    path.base_delay(dir) + SimDuration::from_ps(path.jitter.sample_ps(rng))
}

/// A bidirectional fiber strand carrying different wavelengths per direction.
/// Dispersion makes the effective refractive indices differ, so the two
/// directions are asymmetric even on one physical strand.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiberLink {
    pub length_m: f64,
    pub index_fwd: f64,
    pub index_bwd: f64,
    /// Asymmetry correction known to the protocol after calibration;
    /// `None` means the link has not been calibrated.
    #[serde(default)]
    pub calibrated_asymmetry: Option<SimDuration>,
}

impl FiberLink {
    pub fn new(length_m: f64, index_fwd: f64, index_bwd: f64) -> Self {
        Self {
            length_m,
            index_fwd,
            index_bwd,
            calibrated_asymmetry: None,
        }
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        if self.length_m < 0.0 || self.index_fwd < 1.0 || self.index_bwd < 1.0 {
            return Err(ChannelError::InvalidPath(format!(
                "fiber needs non-negative length and indices >= 1, got {} m / {} / {}",
                self.length_m, self.index_fwd, self.index_bwd
            )));
        }
        Ok(())
    }

    /// Propagation delay for one direction, length x index / c, rounded to ps.
    pub fn delay(&self, dir: Direction) -> SimDuration {
        let index = match dir {
            Direction::Forward => self.index_fwd,
            Direction::Backward => self.index_bwd,
        };
        let seconds = self.length_m * index / SPEED_OF_LIGHT_M_PER_S;
        SimDuration::from_ps((seconds * PS_PER_SECOND as f64).round() as i64)
    }
}

/// delay_fwd − delay_bwd, computed from the lengths and indices the
/// simulation actually applies (each direction rounded to ps first).
pub fn fiber_asymmetry(link: &FiberLink) -> SimDuration {
    link.delay(Direction::Forward) - link.delay(Direction::Backward)
}

/// Antenna feed cable: signal travels below c by the velocity factor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CableModel {
    pub length_m: f64,
    pub velocity_factor: f64,
}

/// Cable propagation delay, length / (vf x c), in ps.
pub fn cable_delay(cable: &CableModel) -> Result<SimDuration, ChannelError> {
    if !(cable.velocity_factor > 0.0 && cable.velocity_factor < 1.0) {
        return Err(ChannelError::InvalidVelocityFactor(cable.velocity_factor));
    }
    let seconds = cable.length_m / (cable.velocity_factor * SPEED_OF_LIGHT_M_PER_S);
    Ok(SimDuration::from_ps(
        (seconds * PS_PER_SECOND as f64).round() as i64,
    ))
}
