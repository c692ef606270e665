//! Shared scenario builders for the integration and acceptance suites.

use chronosim::harness::{validate_config, Scenario};
use serde_json::{json, Value};

pub fn scenario(v: Value) -> Scenario {
    validate_config(&v.to_string()).unwrap_or_else(|issues| {
        panic!("scenario should validate, got: {issues:?}");
    })
}

/// Two ideal 125 MHz clocks over a symmetric jitterless 10 us path whose
/// delay is a whole number of 8 ns periods: every error source removed.
pub fn ideal_round_trip(duration_s: i64, seed: u64) -> Scenario {
    scenario(json!({
        "seed": seed,
        "duration_ps": duration_s * 1_000_000_000_000i64,
        "nodes": [
            {"name": "master", "oscillator": {"nominal_hz": 125e6}},
            {"name": "slave", "oscillator": {"nominal_hz": 125e6}}
        ],
        "links": [
            {"a": "master", "b": "slave",
             "path": {"base_delay_fwd": 10_000_000, "base_delay_bwd": 10_000_000}}
        ],
        "protocol": {"kind": "ROUND_TRIP"}
    }))
}

/// XO slave disciplined over a 10 km asymmetric fiber, White Rabbit style.
pub fn white_rabbit_fiber(duration_s: i64, seed: u64, calibrate: bool) -> Scenario {
    scenario(json!({
        "seed": seed,
        "duration_ps": duration_s * 1_000_000_000_000i64,
        "nodes": [
            {"name": "master", "oscillator": "CESIUM_CLASS"},
            {"name": "slave", "oscillator": "XO", "epoch_offset_ps": 5_000_000}
        ],
        "links": [
            {"a": "master", "b": "slave",
             "fiber": {"length_m": 10_000.0, "index_fwd": 1.4679, "index_bwd": 1.4682}}
        ],
        "protocol": {
            "kind": "WHITE_RABBIT",
            "exchange_interval_ps": 1_000_000_000_000i64,
            "phase_resolution_ps": 10,
            "processing_delay_ps": 1_000_000,
            "calibrate_rounds": if calibrate { 16 } else { 0 }
        }
    }))
}

/// The shared jittery-LAN topology of the protocol ladder: 10 us symmetric
/// base delay with 0-2 us uniform per-traversal jitter.
pub fn lan_topology_nodes_links() -> (Value, Value) {
    let nodes = json!([
        {"name": "master", "oscillator": "CESIUM_CLASS"},
        {"name": "slave", "oscillator": "XO", "epoch_offset_ps": 5_000_000}
    ]);
    let links = json!([
        {"a": "master", "b": "slave",
         "path": {
             "base_delay_fwd": 10_000_000,
             "base_delay_bwd": 10_000_000,
             "jitter": {"kind": "uniform", "lo_ps": 0, "hi_ps": 2_000_000}
         }}
    ]);
    (nodes, links)
}

pub fn ladder_scenario(seed: u64, duration_s: i64, protocol: Value) -> Scenario {
    let (nodes, links) = lan_topology_nodes_links();
    scenario(json!({
        "seed": seed,
        "duration_ps": duration_s * 1_000_000_000_000i64,
        "nodes": nodes,
        "links": links,
        "protocol": protocol
    }))
}

/// NTP over a jittery WAN path with software timestamping.
pub fn ntp_wan(duration_s: i64, seed: u64) -> Scenario {
    scenario(json!({
        "seed": seed,
        "duration_ps": duration_s * 1_000_000_000_000i64,
        "nodes": [
            {"name": "server", "oscillator": "CESIUM_CLASS"},
            {"name": "client", "oscillator": "XO", "timestamping": "sw",
             "epoch_offset_ps": 250_000_000}
        ],
        "links": [
            {"a": "server", "b": "client",
             "path": {
                 "base_delay_fwd": 20_000_000_000i64,
                 "base_delay_bwd": 22_000_000_000i64,
                 "jitter": {"kind": "exponential_tail", "min_ps": 0, "mean_excess_ps": 3.0e9}
             }}
        ],
        "protocol": {
            "kind": "NTP_STYLE",
            "exchange_interval_ps": 16_000_000_000_000i64,
            "sw_jitter_hi_ps": 100_000_000
        }
    }))
}

/// GNSS-disciplined receiver with an antenna cable.
pub fn gnss_receiver(duration_s: i64, seed: u64, noise_ps: f64, compensate: bool) -> Scenario {
    scenario(json!({
        "seed": seed,
        "duration_ps": duration_s * 1_000_000_000_000i64,
        "nodes": [
            {"name": "receiver", "oscillator": "GNSS_DISCIPLINED", "epoch_offset_ps": 2_000_000}
        ],
        "protocol": {
            "kind": "GNSS",
            "exchange_interval_ps": 1_000_000_000_000i64,
            "gnss": {
                "satellites": 6,
                "pseudorange_noise_ps": noise_ps,
                "cable": {"length_m": 30.0, "velocity_factor": 0.66},
                "compensate_cable": compensate
            }
        }
    }))
}

/// Two rubidium-grade laboratories over a geostationary-satellite style path.
pub fn twstt_labs(duration_s: i64, seed: u64) -> Scenario {
    scenario(json!({
        "seed": seed,
        "duration_ps": duration_s * 1_000_000_000_000i64,
        "nodes": [
            {"name": "lab_a", "oscillator": "RUBIDIUM"},
            {"name": "lab_b", "oscillator": "RUBIDIUM", "epoch_offset_ps": 800_000}
        ],
        "links": [
            {"a": "lab_a", "b": "lab_b",
             "path": {
                 "base_delay_fwd": 120_000_000_000i64,
                 "base_delay_bwd": 120_000_000_000i64,
                 "jitter": {"kind": "uniform", "lo_ps": 0, "hi_ps": 50_000}
             }}
        ],
        "protocol": {"kind": "TWSTT", "exchange_interval_ps": 1_000_000_000_000i64}
    }))
}
