//! One-way GNSS pseudorange solving.
//!
//! Each satellite observation constrains the receiver through
//! `(tau_i − Delta) · c = |sat_i − p|`: the measured delay, corrected by the
//! unknown receiver clock offset `Delta`, times the speed of light equals the
//! geometric range. Four unknowns (three position coordinates and `Delta`)
//! need at least four satellites; more observations are solved in the
//! least-squares sense by Gauss-Newton on the residuals.

use nalgebra::{Matrix4, Vector3, Vector4};
use thiserror::Error;

use crate::channel::{cable_delay, CableModel, ChannelError, SPEED_OF_LIGHT_M_PER_S};
use crate::timebase::{SimDuration, SimTime, PS_PER_SECOND};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GnssError {
    #[error("need at least 4 observations, got {0}")]
    InsufficientObservations(usize),
    #[error("observation {index} has non-positive measured delay")]
    NonPositiveDelay { index: usize },
    #[error("satellite geometry is singular (observations coplanar with the receiver)")]
    SingularGeometry,
    #[error("receiver position coincides with satellite {index}")]
    DegenerateRange { index: usize },
    #[error("no convergence in {iterations} iterations (residual norm {residual_norm_m} m)")]
    NonConvergence {
        iterations: u32,
        residual_norm_m: f64,
    },
    #[error(transparent)]
    Channel(#[from] ChannelError),
}

/// One satellite's broadcast as seen by the receiver: where and when the
/// signal was sent, and the transmission delay measured by the receiver's own
/// (offset) clock.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SatelliteObservation {
    pub position_m: [f64; 3],
    pub send_time: SimTime,
    pub measured_delay: SimDuration,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GnssSolution {
    pub position_m: [f64; 3],
    /// Receiver clock offset from GNSS time.
    pub clock_offset: SimDuration,
    pub iterations: u32,
    /// Euclidean norm of the pseudorange residuals at the solution, meters.
    pub residual_norm_m: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GnssSolverConfig {
    pub max_iterations: u32,
    /// Position-update convergence threshold, meters.
    pub position_tol_m: f64,
    /// Clock-update convergence threshold, seconds.
    pub clock_tol_s: f64,
}

impl Default for GnssSolverConfig {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            position_tol_m: 1e-4,
            clock_tol_s: 1e-13,
        }
    }
}

/// Pseudorange residuals `r_i = (tau_i − Delta)·c − |sat_i − p|` and the
/// Jacobian rows `[∂r/∂p, ∂r/∂Delta]` at the given point. Exposed so the
/// analytic Jacobian can be checked against finite differences.
pub fn residuals_and_jacobian(
    observations: &[SatelliteObservation],
    position_m: &[f64; 3],
    clock_offset_s: f64,
) -> Result<(Vec<f64>, Vec<[f64; 4]>), GnssError> {
    let p = Vector3::from(*position_m);
    let mut residuals = Vec::with_capacity(observations.len());
    let mut jacobian = Vec::with_capacity(observations.len());
    for (index, obs) in observations.iter().enumerate() {
        let sat = Vector3::from(obs.position_m);
        let diff = sat - p;
        let dist = diff.norm();
        if dist == 0.0 {
            return Err(GnssError::DegenerateRange { index });
        }
        let tau_s = obs.measured_delay.as_secs_f64();
        residuals.push((tau_s - clock_offset_s) * SPEED_OF_LIGHT_M_PER_S - dist);
        let unit = diff / dist;
        jacobian.push([unit.x, unit.y, unit.z, -SPEED_OF_LIGHT_M_PER_S]);
    }
    Ok((residuals, jacobian))
}

/// Solve for receiver position and clock offset with the default convergence
/// thresholds. The initial guess defaults to the origin with zero offset.
pub fn gnss_solve(
    observations: &[SatelliteObservation],
    initial_guess: Option<([f64; 3], SimDuration)>,
) -> Result<GnssSolution, GnssError> {
    gnss_solve_with(observations, initial_guess, &GnssSolverConfig::default())
}

pub fn gnss_solve_with(
    observations: &[SatelliteObservation],
    initial_guess: Option<([f64; 3], SimDuration)>,
    config: &GnssSolverConfig,
) -> Result<GnssSolution, GnssError> {
    if observations.len() < 4 {
        return Err(GnssError::InsufficientObservations(observations.len()));
    }
    for (index, obs) in observations.iter().enumerate() {
        if !obs.measured_delay.is_positive() {
            return Err(GnssError::NonPositiveDelay { index });
        }
    }

    let (mut position, mut offset_s) = match initial_guess {
        Some((p, d)) => (Vector3::from(p), d.as_secs_f64()),
        None => (Vector3::zeros(), 0.0),
    };

    let mut iterations = 0;
    let mut residual_norm;
    loop {
        iterations += 1;
        let (residuals, jac) =
            residuals_and_jacobian(observations, &[position.x, position.y, position.z], offset_s)?;
        residual_norm = residuals.iter().map(|r| r * r).sum::<f64>().sqrt();

        // Normal equations J^T J dx = -J^T r; always a 4x4 system however
        // many satellites contribute.
        let mut jtj = Matrix4::zeros();
        let mut jtr = Vector4::zeros();
        for (row, r) in jac.iter().zip(&residuals) {
            for i in 0..4 {
                jtr[i] += row[i] * r;
                for j in 0..4 {
                    jtj[(i, j)] += row[i] * row[j];
                }
            }
        }
        let update = jtj
            .lu()
            .solve(&(-jtr))
            .ok_or(GnssError::SingularGeometry)?;

        position += Vector3::new(update[0], update[1], update[2]);
        offset_s += update[3];

        let pos_step = update.fixed_rows::<3>(0).norm();
        if pos_step < config.position_tol_m && update[3].abs() < config.clock_tol_s {
            let (final_res, _) = residuals_and_jacobian(
                observations,
                &[position.x, position.y, position.z],
                offset_s,
            )?;
            residual_norm = final_res.iter().map(|r| r * r).sum::<f64>().sqrt();
            return Ok(GnssSolution {
                position_m: [position.x, position.y, position.z],
                clock_offset: SimDuration::from_secs_f64(offset_s),
                iterations,
                residual_norm_m: residual_norm,
            });
        }
        if iterations >= config.max_iterations {
            return Err(GnssError::NonConvergence {
                iterations,
                residual_norm_m: residual_norm,
            });
        }
    }
}

/// Remove the antenna-cable propagation delay from a solved clock offset. The
/// cable inflates every measured delay equally, which an uncompensated solve
/// absorbs entirely into `Delta`.
pub fn compensate_cable(
    solution: GnssSolution,
    cable: &CableModel,
) -> Result<GnssSolution, GnssError> {
    let d = cable_delay(cable)?;
    Ok(GnssSolution {
        clock_offset: solution.clock_offset - d,
        ..solution
    })
}

pub const EARTH_RADIUS_M: f64 = 6.371e6;
/// Altitude of the synthetic emitter shell above the surface.
pub const GNSS_SHELL_ALTITUDE_M: f64 = 20_200_000.0;

/// Synthetic point-emitter constellation: positions drawn on the shell,
/// rejected until every emitter sits comfortably above the receiver's horizon
/// so the solve geometry stays well conditioned.
pub fn synthetic_constellation(
    rng: &mut rand_chacha::ChaCha12Rng,
    n: usize,
    receiver_m: [f64; 3],
) -> Vec<[f64; 3]> {
    use rand::Rng as _;
    let shell = EARTH_RADIUS_M + GNSS_SHELL_ALTITUDE_M;
    let rx = Vector3::from(receiver_m);
    let up = rx.normalize();
    let mut sats = Vec::with_capacity(n);
    while sats.len() < n {
        let theta = rng.gen_range(0.0..std::f64::consts::TAU);
        let z: f64 = rng.gen_range(-1.0..1.0);
        let r = (1.0 - z * z).sqrt();
        let sat = Vector3::new(r * theta.cos(), r * theta.sin(), z) * shell;
        // Roughly a 15-degree elevation mask.
        if (sat - rx).normalize().dot(&up) < 0.25 {
            continue;
        }
        sats.push([sat.x, sat.y, sat.z]);
    }
    sats
}

/// Geometric signal flight time from an emitter to the receiver, rounded to
/// integer picoseconds.
pub fn flight_time(sat_m: [f64; 3], receiver_m: [f64; 3]) -> SimDuration {
    let dist = (Vector3::from(sat_m) - Vector3::from(receiver_m)).norm();
    SimDuration::from_ps(
        (dist / SPEED_OF_LIGHT_M_PER_S * PS_PER_SECOND as f64).round() as i64,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    /// Forward model: observations whose measured delays are the geometric
    /// flight times plus the receiver clock offset plus optional noise.
    pub(crate) fn synthetic_observations(
        rng: &mut ChaCha12Rng,
        n: usize,
        receiver: [f64; 3],
        offset: SimDuration,
        noise_rms_ps: f64,
    ) -> Vec<SatelliteObservation> {
        synthetic_constellation(rng, n, receiver)
            .into_iter()
            .map(|sat| {
                let noise_ps = if noise_rms_ps > 0.0 {
                    (rng.sample::<f64, _>(rand_distr::StandardNormal) * noise_rms_ps).round()
                        as i64
                } else {
                    0
                };
                SatelliteObservation {
                    position_m: sat,
                    send_time: SimTime::ZERO,
                    measured_delay: flight_time(sat, receiver)
                        + offset
                        + SimDuration::from_ps(noise_ps),
                }
            })
            .collect()
    }

    #[test]
    fn noiseless_self_consistency() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let receiver = [EARTH_RADIUS_M, 0.0, 0.0];
        let obs = synthetic_observations(&mut rng, 6, receiver, SimDuration::ZERO, 0.0);
        let sol = gnss_solve(&obs, None).unwrap();
        assert!(sol.residual_norm_m < 1e-3, "{}", sol.residual_norm_m);
        assert!(sol.clock_offset.abs().ps() <= 1);
        for i in 0..3 {
            assert!((sol.position_m[i] - receiver[i]).abs() < 1e-3);
        }
        assert!(sol.iterations <= 50);
    }

    #[test]
    fn recovers_random_truths() {
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        for _ in 0..50 {
            let dir = ChaCha12Rng::seed_from_u64(rng.gen());
            let mut dir_rng = dir;
            let theta = dir_rng.gen_range(0.0..std::f64::consts::TAU);
            let z: f64 = dir_rng.gen_range(-0.9..0.9);
            let r = (1.0 - z * z).sqrt();
            let receiver = [
                EARTH_RADIUS_M * r * theta.cos(),
                EARTH_RADIUS_M * r * theta.sin(),
                EARTH_RADIUS_M * z,
            ];
            let truth = SimDuration::from_ps(dir_rng.gen_range(-1_000_000_000..=1_000_000_000));
            let obs = synthetic_observations(&mut rng, 6, receiver, truth, 0.0);
            let sol = gnss_solve(&obs, None).unwrap();
            assert!(
                (sol.clock_offset - truth).abs().ps() <= 10,
                "offset error {}",
                (sol.clock_offset - truth).abs()
            );
            for i in 0..3 {
                assert!((sol.position_m[i] - receiver[i]).abs() < 1e-3);
            }
        }
    }

    #[test]
    fn too_few_observations() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let obs =
            synthetic_observations(&mut rng, 3, [EARTH_RADIUS_M, 0.0, 0.0], SimDuration::ZERO, 0.0);
        assert_eq!(
            gnss_solve(&obs, None).unwrap_err(),
            GnssError::InsufficientObservations(3)
        );
    }

    #[test]
    fn coplanar_geometry_is_singular() {
        // Four satellites in one plane through the receiver cannot separate
        // the normal component of position from the clock offset.
        let shell = EARTH_RADIUS_M + GNSS_SHELL_ALTITUDE_M;
        let mut obs = vec![];
        for k in 0..4 {
            let ang = k as f64 * std::f64::consts::FRAC_PI_2;
            let sat = [shell * ang.cos(), shell * ang.sin(), 0.0];
            let dist = (Vector3::from(sat) - Vector3::new(EARTH_RADIUS_M, 0.0, 0.0)).norm();
            obs.push(SatelliteObservation {
                position_m: sat,
                send_time: SimTime::ZERO,
                measured_delay: SimDuration::from_secs_f64(dist / SPEED_OF_LIGHT_M_PER_S),
            });
        }
        // Start the solver in the same plane so the degeneracy is exact.
        let got = gnss_solve(&obs, Some(([EARTH_RADIUS_M, 0.0, 0.0], SimDuration::ZERO)));
        assert!(
            matches!(
                got,
                Err(GnssError::SingularGeometry) | Err(GnssError::NonConvergence { .. })
            ),
            "{got:?}"
        );
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let receiver = [EARTH_RADIUS_M, 1000.0, -2000.0];
        let obs = synthetic_observations(&mut rng, 6, receiver, SimDuration::ZERO, 0.0);
        for _ in 0..10 {
            let p = [
                receiver[0] + rng.gen_range(-1e4..1e4),
                receiver[1] + rng.gen_range(-1e4..1e4),
                receiver[2] + rng.gen_range(-1e4..1e4),
            ];
            let dt = rng.gen_range(-1e-6..1e-6);
            let (_, jac) = residuals_and_jacobian(&obs, &p, dt).unwrap();
            // Central differences on each of the four coordinates.
            let h_pos = 1e-2;
            let h_t = 1e-9;
            for (i, row) in jac.iter().enumerate() {
                for axis in 0..3 {
                    let mut hi = p;
                    let mut lo = p;
                    hi[axis] += h_pos;
                    lo[axis] -= h_pos;
                    let (r_hi, _) = residuals_and_jacobian(&obs, &hi, dt).unwrap();
                    let (r_lo, _) = residuals_and_jacobian(&obs, &lo, dt).unwrap();
                    let fd = (r_hi[i] - r_lo[i]) / (2.0 * h_pos);
                    assert!(
                        (fd - row[axis]).abs() <= 1e-6 * row[axis].abs().max(1.0),
                        "axis {axis}: fd {fd} vs analytic {}",
                        row[axis]
                    );
                }
                let (r_hi, _) = residuals_and_jacobian(&obs, &p, dt + h_t).unwrap();
                let (r_lo, _) = residuals_and_jacobian(&obs, &p, dt - h_t).unwrap();
                let fd = (r_hi[i] - r_lo[i]) / (2.0 * h_t);
                assert!(
                    (fd - row[3]).abs() <= 1e-6 * SPEED_OF_LIGHT_M_PER_S,
                    "clock: fd {fd} vs analytic {}",
                    row[3]
                );
            }
        }
    }

    #[test]
    fn cable_compensation_round_trip() {
        let cable = CableModel {
            length_m: 30.0,
            velocity_factor: 0.66,
        };
        let cable_ps = cable_delay(&cable).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let receiver = [EARTH_RADIUS_M, 0.0, 0.0];
        let truth = SimDuration::from_micros(3);
        // The cable adds its delay to every measured tau.
        let obs =
            synthetic_observations(&mut rng, 6, receiver, truth + cable_ps, 0.0);
        let raw = gnss_solve(&obs, None).unwrap();
        let bias = raw.clock_offset - truth;
        assert!(
            (bias - cable_ps).abs().ps() <= 1,
            "uncompensated bias {bias} vs cable {cable_ps}"
        );
        let fixed = compensate_cable(raw, &cable).unwrap();
        assert!((fixed.clock_offset - truth).abs().ps() <= 1);

        // Zero-length cable changes nothing.
        let zero = CableModel {
            length_m: 0.0,
            velocity_factor: 0.66,
        };
        let same = compensate_cable(fixed, &zero).unwrap();
        assert_eq!(same.clock_offset, fixed.clock_offset);

        // Applying the compensation twice leaves a bias of minus one cable
        // delay; double application is detectable.
        let twice = compensate_cable(compensate_cable(raw, &cable).unwrap(), &cable).unwrap();
        assert!(((twice.clock_offset - truth) - (SimDuration::ZERO - cable_ps))
            .abs()
            .ps()
            <= 1);
    }
}
