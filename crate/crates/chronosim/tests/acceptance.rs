//! Acceptance suite: one test per criterion, each printing a PASS line with
//! the measured figure (run with `--nocapture` to see them).

mod common;

use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use chronosim::channel::{fiber_asymmetry, CableModel, FiberLink};
use chronosim::harness::{compare_protocols, run_scenario, write_outputs};
use chronosim::metrics::{adev_ladder, allan_deviation};
use chronosim::oscillator::{holdover_time_to_bound_s, ClockState, OscillatorModel};
use chronosim::protocols::{
    compensate_cable, flight_time, gnss_solve, round_trip_estimate, synthetic_constellation,
    twstt_estimate, two_way_estimate, FourWayTimestamps, IntervalPair, RoundTripRecord,
    SatelliteObservation, EARTH_RADIUS_M,
};
use chronosim::timebase::{SimDuration, SimTime};

fn t(ps: i64) -> SimTime {
    SimTime::from_ps(ps)
}

fn d(ps: i64) -> SimDuration {
    SimDuration::from_ps(ps)
}

/// Generate the four NTP-style timestamps from ground truth via the defining
/// relations (request travels B to A, response A to B).
fn four_way(t_b1: i64, d_req: i64, d_resp: i64, delta: i64, processing: i64) -> FourWayTimestamps {
    let t_a2 = t_b1 + d_req - delta;
    let t_a3 = t_a2 + processing;
    FourWayTimestamps {
        t_b1: t(t_b1),
        t_a2: t(t_a2),
        t_a3: t(t_a3),
        t_b4: t(t_a3 + d_resp + delta),
    }
}

/// Criterion 1: 10^4 randomized (d, delta) pairs per variant, pushed through
/// the timing relations and re-estimated: exact recovery on symmetric
/// noiseless channels, in under five seconds.
#[test]
fn acceptance_01_formula_inversion() {
    let started = Instant::now();
    let mut rng = ChaCha12Rng::seed_from_u64(0xACC1);
    for _ in 0..10_000 {
        let delay = rng.gen_range(1..=1_000_000_000_000i64);
        let delta = rng.gen_range(-(delay - 1)..=(delay - 1));
        let processing = rng.gen_range(0..=1_000_000_000i64);
        let base = rng.gen_range(-1_000_000_000_000i64..=1_000_000_000_000);

        let est = two_way_estimate(&four_way(base, delay, delay, delta, processing)).unwrap();
        assert_eq!((est.delay.ps(), est.offset.ps()), (delay, delta));

        let est = twstt_estimate(&IntervalPair {
            tau_a: d(delay - delta),
            tau_b: d(delay + delta),
        })
        .unwrap();
        assert_eq!((est.delay.ps(), est.offset.ps()), (delay, delta));

        let est = round_trip_estimate(&RoundTripRecord {
            tau: d(2 * delay),
            t_a: t(base),
            t_b: t(base + delay + delta),
        })
        .unwrap();
        assert_eq!((est.delay.ps(), est.offset.ps()), (delay, delta));
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 5.0, "took {elapsed:?}");
    println!(
        "ACCEPTANCE 1 formula-inversion: PASS (3x10^4 exact recoveries in {:.2?})",
        elapsed
    );
}

/// Criterion 2: over 10^3 random asymmetric noiseless channels the estimate
/// error (truth minus estimate) equals (d_bwd - d_fwd)/2 exactly for all
/// three variants. Asymmetries are drawn even so the halving is exact.
#[test]
fn acceptance_02_asymmetry_law() {
    let mut rng = ChaCha12Rng::seed_from_u64(0xACC2);
    for _ in 0..1_000 {
        let d_fwd = rng.gen_range(1..=1_000_000_000i64);
        let d_bwd = loop {
            let v = d_fwd + 2 * rng.gen_range(-400_000_000..=400_000_000i64);
            if v > 0 {
                break v;
            }
        };
        let bound = d_fwd.min(d_bwd);
        let delta = rng.gen_range(-(bound - 1)..=(bound - 1));
        let expected = (d_bwd - d_fwd) / 2;

        let est = two_way_estimate(&four_way(0, d_bwd, d_fwd, delta, 0)).unwrap();
        assert_eq!(delta - est.offset.ps(), expected);

        let est = twstt_estimate(&IntervalPair {
            tau_a: d(d_bwd - delta),
            tau_b: d(d_fwd + delta),
        })
        .unwrap();
        assert_eq!(delta - est.offset.ps(), expected);

        let est = round_trip_estimate(&RoundTripRecord {
            tau: d(d_fwd + d_bwd),
            t_a: t(0),
            t_b: t(d_fwd + delta),
        })
        .unwrap();
        assert_eq!(delta - est.offset.ps(), expected);
    }
    println!("ACCEPTANCE 2 asymmetry-law: PASS (10^3 channels, exact for all variants)");
}

fn random_receiver(rng: &mut ChaCha12Rng) -> [f64; 3] {
    let theta = rng.gen_range(0.0..std::f64::consts::TAU);
    let z: f64 = rng.gen_range(-0.9..0.9);
    let r = (1.0 - z * z).sqrt();
    [
        EARTH_RADIUS_M * r * theta.cos(),
        EARTH_RADIUS_M * r * theta.sin(),
        EARTH_RADIUS_M * z,
    ]
}

fn observations_for(
    rng: &mut ChaCha12Rng,
    receiver: [f64; 3],
    truth: SimDuration,
    noise_rms_ps: f64,
) -> Vec<SatelliteObservation> {
    synthetic_constellation(rng, 6, receiver)
        .into_iter()
        .map(|sat| {
            let noise = if noise_rms_ps > 0.0 {
                (rng.sample::<f64, _>(rand_distr::StandardNormal) * noise_rms_ps).round() as i64
            } else {
                0
            };
            SatelliteObservation {
                position_m: sat,
                send_time: SimTime::ZERO,
                measured_delay: flight_time(sat, receiver) + truth + d(noise),
            }
        })
        .collect()
}

/// Criterion 3: 10^3 noiseless solves recover the clock offset within 10 ps
/// and position within 1 mm; with 10 ns RMS pseudorange noise the offset
/// error stays below 100 ns in at least 95% of 10^3 trials. The exact noisy
/// pass count is frozen as a regression value. Under thirty seconds.
#[test]
fn acceptance_03_gnss_solver() {
    let started = Instant::now();
    let mut rng = ChaCha12Rng::seed_from_u64(0xACC3);
    for _ in 0..1_000 {
        let receiver = random_receiver(&mut rng);
        let truth = d(rng.gen_range(-1_000_000_000..=1_000_000_000i64));
        let obs = observations_for(&mut rng, receiver, truth, 0.0);
        let sol = gnss_solve(&obs, None).unwrap();
        assert!(
            (sol.clock_offset - truth).abs().ps() <= 10,
            "offset error {}",
            (sol.clock_offset - truth).abs()
        );
        for i in 0..3 {
            assert!(
                (sol.position_m[i] - receiver[i]).abs() < 1e-3,
                "position error {} m",
                (sol.position_m[i] - receiver[i]).abs()
            );
        }
    }

    let mut within_100ns = 0u32;
    for _ in 0..1_000 {
        let receiver = random_receiver(&mut rng);
        let truth = d(rng.gen_range(-1_000_000_000..=1_000_000_000i64));
        let obs = observations_for(&mut rng, receiver, truth, 10_000.0);
        let sol = gnss_solve(&obs, None).unwrap();
        if (sol.clock_offset - truth).abs().ps() < 100_000 {
            within_100ns += 1;
        }
    }
    assert!(within_100ns >= 950, "only {within_100ns}/1000 within 100 ns");
    // Frozen from the first run of this seed: a regression value, not a
    // statistical bound.
    assert_eq!(within_100ns, 1000);

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 30.0, "took {elapsed:?}");
    println!(
        "ACCEPTANCE 3 gnss: PASS (noiseless exact, noisy {}/1000 within 100 ns, {:.2?})",
        within_100ns, elapsed
    );
}

/// Criterion 4: the uncompensated clock-offset bias equals the cable delay
/// to within 1 ps for 1-100 m cables, and compensation removes it.
#[test]
fn acceptance_04_cable_compensation() {
    let mut rng = ChaCha12Rng::seed_from_u64(0xACC4);
    for &(length_m, vf) in &[
        (1.0, 0.66),
        (2.5, 0.8),
        (10.0, 0.66),
        (30.0, 0.66),
        (55.5, 0.7),
        (100.0, 0.66),
    ] {
        let cable = CableModel {
            length_m,
            velocity_factor: vf,
        };
        let cable_ps = chronosim::channel::cable_delay(&cable).unwrap();
        let receiver = random_receiver(&mut rng);
        let truth = d(rng.gen_range(-1_000_000..=1_000_000i64));
        // The cable sits between antenna and receiver: every measured delay
        // carries it.
        let obs = observations_for(&mut rng, receiver, truth + cable_ps, 0.0);
        let raw = gnss_solve(&obs, None).unwrap();
        let bias = raw.clock_offset - truth;
        assert!(
            (bias - cable_ps).abs().ps() <= 1,
            "{length_m} m: bias {bias} vs cable {cable_ps}"
        );
        let fixed = compensate_cable(raw, &cable).unwrap();
        assert!(
            (fixed.clock_offset - truth).abs().ps() <= 1,
            "{length_m} m: residual {}",
            fixed.clock_offset - truth
        );
    }
    println!("ACCEPTANCE 4 cable-compensation: PASS (bias = cable delay within 1 ps, removed)");
}

/// Criterion 5: XO slave over a 10 km calibrated asymmetric fiber for 60
/// simulated seconds at 10 ps phase resolution reaches steady-state max
/// |offset error| below 1 ns; the uncalibrated control shows the
/// half-asymmetry bias. Under sixty seconds of wall time.
#[test]
fn acceptance_05_white_rabbit_fiber() {
    let started = Instant::now();
    let calibrated = run_scenario(&common::white_rabbit_fiber(60, 0xACC5, true)).unwrap();
    let slave = calibrated.node("slave").unwrap();
    assert!(
        slave.steady_state.max_abs_error_ps < 1_000,
        "steady max {} ps",
        slave.steady_state.max_abs_error_ps
    );

    let control = run_scenario(&common::white_rabbit_fiber(60, 0xACC5, false)).unwrap();
    let uncal = control.node("slave").unwrap();
    let link = FiberLink::new(10_000.0, 1.4679, 1.4682);
    let half_asym = fiber_asymmetry(&link).half_toward_zero().abs().ps();
    let bias = uncal.steady_state.mean_error_ps.abs();
    assert!(
        (bias - half_asym).abs() < 1_000,
        "uncalibrated bias {bias} ps vs half asymmetry {half_asym} ps"
    );

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 60.0, "took {elapsed:?}");
    println!(
        "ACCEPTANCE 5 white-rabbit: PASS (calibrated {} ps, uncalibrated bias {} ps ~ asym/2 {} ps, {:.2?})",
        slave.steady_state.max_abs_error_ps, bias, half_asym, elapsed
    );
}

/// Criterion 6: the precision ladder. On one shared jittery-LAN topology the
/// steady-state error orders WHITE_RABBIT < PTP_HW < NTP_STYLE-sw, with
/// PTP_HW in the sub-microsecond class; NTP with software stamps over a
/// WAN-scale jittery path lands in the millisecond class.
#[test]
fn acceptance_06_precision_ladder() {
    let seed = 0xACC6;
    let scenarios = vec![
        (
            "white_rabbit".to_string(),
            common::ladder_scenario(
                seed,
                600,
                serde_json::json!({
                    "kind": "WHITE_RABBIT",
                    "exchange_interval_ps": 1_000_000_000_000i64,
                    "wr_window": 16
                }),
            ),
        ),
        (
            "ptp_hw".to_string(),
            common::ladder_scenario(
                seed,
                600,
                serde_json::json!({
                    "kind": "PTP_HW",
                    "exchange_interval_ps": 1_000_000_000_000i64,
                    "servo": {"kp": 0.15, "ki": 0.03, "steer_limit": 1e-4,
                              "lock_threshold": 1_000_000, "lock_count": 5}
                }),
            ),
        ),
        (
            "ntp_sw".to_string(),
            common::ladder_scenario(
                seed,
                600,
                serde_json::json!({
                    "kind": "NTP_STYLE",
                    "exchange_interval_ps": 4_000_000_000_000i64,
                    "timestamping": "sw",
                    "sw_jitter_hi_ps": 100_000_000
                }),
            ),
        ),
    ];
    let (table, _) = compare_protocols(&scenarios).unwrap();
    let order: Vec<&str> = table.rows.iter().map(|r| r.protocol.as_str()).collect();
    assert_eq!(
        order,
        vec!["WHITE_RABBIT", "PTP_HW", "NTP_STYLE"],
        "ladder order wrong: {table}"
    );
    let wr = table.rows[0].steady_max_abs_error_ps;
    let ptp = table.rows[1].steady_max_abs_error_ps;
    let ntp = table.rows[2].steady_max_abs_error_ps;
    assert!(wr < ptp && ptp < ntp);
    assert!(ptp < 1_000_000, "PTP_HW must be sub-microsecond, got {ptp} ps");
    assert!(ntp > 10 * ptp, "NTP must sit a class above PTP");

    // The millisecond figure comes from software stamps over a WAN path.
    let wan = run_scenario(&common::ntp_wan(600, seed)).unwrap();
    let client = wan.node("client").unwrap();
    let wan_max = client.steady_state.max_abs_error_ps;
    assert!(
        (300_000_000..50_000_000_000).contains(&wan_max),
        "WAN NTP should be millisecond class, got {wan_max} ps"
    );
    println!(
        "ACCEPTANCE 6 precision-ladder: PASS (WR {wr} < PTP {ptp} < NTP {ntp} ps on LAN; WAN NTP {wan_max} ps)"
    );
}

/// Criterion 7: a 20 ppm XO drifts exactly 20 us over one simulated second,
/// and a 1e-11 residual bias reaches the 1 ms holdover bound at about 3.17
/// years, within 0.5% of the closed-form footnote value.
#[test]
fn acceptance_07_drift_arithmetic() {
    let model = OscillatorModel {
        freq_bias: 20e-6,
        ..OscillatorModel::ideal(125e6)
    };
    let mut clock = ClockState::new(model, SimDuration::ZERO);
    let mut rng = ChaCha12Rng::seed_from_u64(0xACC7);
    clock.advance(SimTime::from_secs(1), None, &mut rng);
    assert_eq!(clock.offset_from_truth(), SimDuration::from_micros(20));

    let seconds = holdover_time_to_bound_s(1e-11, 0.0, 1e-3);
    let years = seconds / (60.0 * 60.0 * 24.0 * 365.0);
    assert!(
        (years - 3.17).abs() / 3.17 < 0.005,
        "holdover crossover {years} years"
    );
    println!(
        "ACCEPTANCE 7 drift-arithmetic: PASS (20 us per s exact; 1 ms bound at {years:.3} years)"
    );
}

/// Criterion 8: the collapsed inequality -d' < 0 < d holds for every sampled
/// (delta, d, d') including offsets far beyond d + d', so it bounds nothing;
/// and two free-running clocks with distinct biases diverge linearly without
/// bound.
#[test]
fn acceptance_08_huygens_critique() {
    let mut rng = ChaCha12Rng::seed_from_u64(0xACC8);
    for _ in 0..10_000 {
        let d_fwd = rng.gen_range(1..=1_000_000_000i64);
        let d_bwd = rng.gen_range(1..=1_000_000_000i64);
        let delta = rng.gen_range(i64::MIN / 4..=i64::MAX / 4);
        assert!(delta - d_bwd < delta && delta < delta + d_fwd);
        // Offsets a million round trips beyond the delays still satisfy it.
        let huge = (d_fwd + d_bwd) * 1_000_000;
        assert!(huge - d_bwd < huge && huge < huge + d_fwd);
        assert!(-huge - d_bwd < -huge && -huge < -huge + d_fwd);
    }

    let fast = OscillatorModel {
        freq_bias: 30e-6,
        ..OscillatorModel::ideal(125e6)
    };
    let slow = OscillatorModel {
        freq_bias: -20e-6,
        ..OscillatorModel::ideal(125e6)
    };
    let mut a = ClockState::new(fast, SimDuration::from_micros(2));
    let mut b = ClockState::new(slow, SimDuration::from_micros(-1));
    let mut last = SimDuration::ZERO;
    for k in 1..=16 {
        let now = SimTime::from_secs(k * 50);
        a.advance(now, None, &mut rng);
        b.advance(now, None, &mut rng);
        let offset = (a.local_time() - b.local_time()).abs();
        assert!(offset > last, "offset stopped growing at t = {now}");
        // Matches the closed form |(alpha - beta) t + (a - b)| exactly.
        let expect = 50e-6 * (now.ps() as f64 / 1e12) * 1e12 + 3_000_000.0;
        assert_eq!(offset.ps(), expect as i64);
        last = offset;
    }
    println!(
        "ACCEPTANCE 8 huygens-critique: PASS (bound vacuous for 10^4 draws; divergence reaches {last} over 800 s)"
    );
}

/// Criterion 9: Allan deviation equals a brute-force evaluation of the
/// definition exactly; white frequency noise shows the tau^(-1/2) slope
/// within 10% over a decade; constant and ramp invariance hold exactly.
#[test]
fn acceptance_09_allan_deviation() {
    let mut rng = ChaCha12Rng::seed_from_u64(0xACC9);
    let tau0 = SimDuration::from_secs(1);

    // Brute-force equality on a random series.
    let samples: Vec<i64> = (0..2_000)
        .map(|_| rng.gen_range(-10_000_000i64..=10_000_000))
        .collect();
    let taus = adev_ladder(samples.len(), tau0);
    for (tau, got) in allan_deviation(&samples, tau0, &taus) {
        let m = (tau.ps() / tau0.ps()) as usize;
        let mut sum: u128 = 0;
        for i in 0..(samples.len() - 2 * m) {
            let second_diff =
                (samples[i + 2 * m] - 2 * samples[i + m] + samples[i]) as i128;
            sum += (second_diff * second_diff) as u128;
        }
        let tau_s = m as f64;
        let expect = (sum as f64 * 1e-24
            / (2.0 * (samples.len() - 2 * m) as f64 * tau_s * tau_s))
            .sqrt();
        assert_eq!(got.unwrap(), expect, "m = {m}");
    }

    // White frequency noise slope over one decade.
    let sigma_y = 1e-9;
    let mut phase = 0i64;
    let wfm: Vec<i64> = (0..200_000)
        .map(|_| {
            let y: f64 = rng.sample(rand_distr::StandardNormal);
            phase += (y * sigma_y * 1e12).round() as i64;
            phase
        })
        .collect();
    let decade: Vec<SimDuration> = [1i64, 2, 4, 8, 10].iter().map(|&m| tau0.scaled(m)).collect();
    let pts: Vec<(f64, f64)> = allan_deviation(&wfm, tau0, &decade)
        .into_iter()
        .map(|(tau, a)| (tau.as_secs_f64().ln(), a.unwrap().ln()))
        .collect();
    let n = pts.len() as f64;
    let (sx, sy): (f64, f64) = (pts.iter().map(|p| p.0).sum(), pts.iter().map(|p| p.1).sum());
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    assert!((slope + 0.5).abs() <= 0.05, "slope {slope}");

    // Exact invariance under constant and linear ramp addition.
    let shifted: Vec<i64> = samples
        .iter()
        .enumerate()
        .map(|(k, &x)| x + 123_456 + 789 * k as i64)
        .collect();
    let a = allan_deviation(&samples, tau0, &taus);
    let b = allan_deviation(&shifted, tau0, &taus);
    for ((_, x), (_, y)) in a.iter().zip(b.iter()) {
        assert_eq!(x.as_ref().unwrap(), y.as_ref().unwrap());
    }

    println!(
        "ACCEPTANCE 9 allan-deviation: PASS (oracle exact, slope {slope:.3}, ramp-invariant)"
    );
}

/// Criterion 10: equal seeds produce byte-identical CSV outputs.
#[test]
fn acceptance_10_reproducibility() {
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    let scn = common::white_rabbit_fiber(20, 0xACCA, true);
    write_outputs(&run_scenario(&scn).unwrap(), dir_a.path()).unwrap();
    write_outputs(&run_scenario(&scn).unwrap(), dir_b.path()).unwrap();
    for file in ["series_master.csv", "series_slave.csv", "report.json"] {
        let a = std::fs::read(dir_a.path().join(file)).unwrap();
        let b = std::fs::read(dir_b.path().join(file)).unwrap();
        assert!(!a.is_empty());
        assert_eq!(a, b, "{file} differs between identical runs");
    }
    println!("ACCEPTANCE 10 reproducibility: PASS (byte-identical CSV and report)");
}
