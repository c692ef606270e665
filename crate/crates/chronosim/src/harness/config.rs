//! Scenario configuration: JSON schema, semantic validation, and the typed
//! form the runner consumes.
//!
//! Validation is whole-file: every problem is reported at once, each naming
//! the field it belongs to. A scenario with no seed is invalid by design —
//! there is no wall-clock fallback anywhere.

use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::channel::{CableModel, FiberLink, PathModel};
use crate::oscillator::{OscillatorClass, OscillatorModel, ServoConfig};
use crate::timebase::{SimDuration, SimTime};

/// Scenario-config protocol enumerators, verbatim from config files.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProtocolKind {
    #[serde(rename = "NTP_STYLE")]
    NtpStyle,
    #[serde(rename = "PTP_HW")]
    PtpHw,
    #[serde(rename = "TWSTT")]
    Twstt,
    #[serde(rename = "ROUND_TRIP")]
    RoundTrip,
    #[serde(rename = "WHITE_RABBIT")]
    WhiteRabbit,
    #[serde(rename = "GNSS")]
    Gnss,
}

impl ProtocolKind {
    pub fn name(&self) -> &'static str {
        match self {
            ProtocolKind::NtpStyle => "NTP_STYLE",
            ProtocolKind::PtpHw => "PTP_HW",
            ProtocolKind::Twstt => "TWSTT",
            ProtocolKind::RoundTrip => "ROUND_TRIP",
            ProtocolKind::WhiteRabbit => "WHITE_RABBIT",
            ProtocolKind::Gnss => "GNSS",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimestampMode {
    Hw,
    Sw,
}

/// Oscillator: either a preset name (verbatim) or an explicit model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OscillatorSpec {
    Preset(String),
    Model(OscillatorModel),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeConfig {
    pub name: String,
    pub oscillator: OscillatorSpec,
    #[serde(default = "default_hw")]
    pub timestamping: TimestampMode,
    #[serde(default)]
    pub epoch_offset_ps: i64,
}

fn default_hw() -> TimestampMode {
    TimestampMode::Hw
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiberConfig {
    pub length_m: f64,
    pub index_fwd: f64,
    pub index_bwd: f64,
    /// Pre-known asymmetry correction; omit to model an uncalibrated link.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibrated_asymmetry_ps: Option<i64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkConfig {
    pub a: String,
    pub b: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathModel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fiber: Option<FiberConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GnssConfig {
    #[serde(default = "default_satellites")]
    pub satellites: usize,
    /// RMS pseudorange noise applied per observation, picoseconds.
    #[serde(default)]
    pub pseudorange_noise_ps: f64,
    /// Receiver position, meters ECEF; defaults to a point on the surface.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub receiver_position_m: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cable: Option<CableModel>,
    /// Whether the solver output is corrected for the antenna cable.
    #[serde(default = "default_true")]
    pub compensate_cable: bool,
}

fn default_satellites() -> usize {
    6
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub kind: ProtocolKind,
    #[serde(default = "default_interval")]
    pub exchange_interval_ps: i64,
    #[serde(default)]
    pub servo: Option<ServoConfig>,
    /// Protocol-level timestamping override (a protocol property: PTP_HW
    /// means hardware stamps no matter what the node defaults say).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamping: Option<TimestampMode>,
    /// Upper bound of the uniform software-stack stamp jitter, ps.
    #[serde(default = "default_sw_jitter")]
    pub sw_jitter_hi_ps: i64,
    /// Responder turnaround between request arrival and response departure.
    /// Defaults per protocol: about a millisecond for the software server
    /// protocols, a microsecond for White Rabbit, zero (instant reflection)
    /// for the loop-back method.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub processing_delay_ps: Option<i64>,
    /// Width of the minimum-delay sample filter fed to the servo.
    #[serde(default = "default_filter_window")]
    pub filter_window: usize,
    /// White Rabbit: time-interval-counter quantization.
    #[serde(default = "default_phase_resolution")]
    pub phase_resolution_ps: i64,
    /// White Rabbit: exchanges averaged per phase-step correction.
    #[serde(default = "default_wr_window")]
    pub wr_window: usize,
    /// White Rabbit: pre-calibration rounds against the reference (0 keeps
    /// whatever calibration the link config carries).
    #[serde(default)]
    pub calibrate_rounds: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gnss: Option<GnssConfig>,
}

fn default_interval() -> i64 {
    1_000_000_000_000
}

fn default_sw_jitter() -> i64 {
    100_000_000
}

fn default_filter_window() -> usize {
    1
}

fn default_phase_resolution() -> i64 {
    10
}

fn default_wr_window() -> usize {
    8
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
}

/// The raw, serde-level scenario file. Semantic checks live in
/// [`validate_config`], which reports all problems at once.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub seed: Option<u64>,
    pub duration_ps: Option<i64>,
    #[serde(default = "default_cadence")]
    pub sample_cadence_ps: i64,
    /// Fraction of the run treated as steady state for summary statistics
    /// (measured from the end).
    #[serde(default = "default_steady_fraction")]
    pub steady_fraction: f64,
    pub nodes: Vec<NodeConfig>,
    #[serde(default)]
    pub links: Vec<LinkConfig>,
    pub protocol: ProtocolConfig,
    #[serde(default)]
    pub outputs: OutputConfig,
}

fn default_cadence() -> i64 {
    1_000_000_000
}

fn default_steady_fraction() -> f64 {
    0.5
}

/// One validation problem, naming the offending field.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfigIssue {
    pub field: String,
    pub message: String,
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

/// The medium of the (single) synchronization link.
#[derive(Clone, Debug, PartialEq)]
pub enum Medium {
    Path(PathModel),
    Fiber(FiberLink),
}

/// Fully validated scenario, ready to run.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub seed: u64,
    pub duration: SimDuration,
    pub cadence: SimDuration,
    pub steady_fraction: f64,
    pub nodes: Vec<NodeConfig>,
    /// (a-index, b-index, medium) of the synchronization link, for the
    /// two-clock protocols.
    pub link: Option<(usize, usize, Medium)>,
    pub protocol: ProtocolConfig,
    pub out_dir: Option<PathBuf>,
    /// The parsed config echoed into reports (keys sorted by serde_json).
    pub echo: serde_json::Value,
}

impl Scenario {
    /// Resolve a node's oscillator spec into a concrete model. Presets that
    /// draw parameters (XO) consume from the supplied stream.
    pub fn oscillator_model(
        spec: &OscillatorSpec,
        rng: &mut rand_chacha::ChaCha12Rng,
    ) -> OscillatorModel {
        match spec {
            OscillatorSpec::Preset(name) => OscillatorClass::parse(name)
                .expect("preset validated")
                .model(rng),
            OscillatorSpec::Model(m) => m.clone(),
        }
    }
}

/// Parse and semantically validate a JSON scenario. All problems are
/// reported, not just the first.
pub fn validate_config(raw: &str) -> Result<Scenario, Vec<ConfigIssue>> {
    let value: serde_json::Value = match serde_json::from_str(raw) {
        Ok(v) => v,
        Err(e) => {
            return Err(vec![ConfigIssue {
                field: "<file>".into(),
                message: format!("not valid JSON: {e}"),
            }])
        }
    };
    let cfg: ScenarioConfig = match serde_json::from_value(value.clone()) {
        Ok(c) => c,
        Err(e) => {
            return Err(vec![ConfigIssue {
                field: "<file>".into(),
                message: format!("does not match the scenario schema: {e}"),
            }])
        }
    };
    validate(&cfg, value)
}

fn validate(cfg: &ScenarioConfig, echo: serde_json::Value) -> Result<Scenario, Vec<ConfigIssue>> {
    let mut issues = Vec::new();
    let mut issue = |field: &str, message: String| {
        issues.push(ConfigIssue {
            field: field.to_string(),
            message,
        })
    };

    if cfg.seed.is_none() {
        issue("seed", "a seed is mandatory; runs never default to wall-clock entropy".into());
    }
    match cfg.duration_ps {
        None => issue("duration_ps", "missing run duration".into()),
        Some(d) if d <= 0 => issue("duration_ps", format!("must be positive, got {d}")),
        Some(d) if d > 4_000_000_000_000_000_000 => {
            issue("duration_ps", format!("{d} exceeds the exact integer time range"))
        }
        _ => {}
    }
    if cfg.sample_cadence_ps <= 0 {
        issue(
            "sample_cadence_ps",
            format!("must be positive, got {}", cfg.sample_cadence_ps),
        );
    }
    if !(0.0 < cfg.steady_fraction && cfg.steady_fraction <= 1.0) {
        issue(
            "steady_fraction",
            format!("must lie in (0, 1], got {}", cfg.steady_fraction),
        );
    }

    if cfg.nodes.is_empty() {
        issue("nodes", "at least one node is required".into());
    }
    for (i, node) in cfg.nodes.iter().enumerate() {
        let field = format!("nodes[{i}]");
        if node.name.is_empty() {
            issue(&field, "node name must not be empty".into());
        }
        if cfg.nodes[..i].iter().any(|n| n.name == node.name) {
            issue(&field, format!("duplicate node name \"{}\"", node.name));
        }
        match &node.oscillator {
            OscillatorSpec::Preset(name) => {
                if OscillatorClass::parse(name).is_none() {
                    issue(
                        &format!("{field}.oscillator"),
                        format!(
                            "unknown preset \"{name}\"; expected one of {}",
                            OscillatorClass::NAMES.join(", ")
                        ),
                    );
                }
            }
            OscillatorSpec::Model(m) => {
                if let Err(e) = m.validate() {
                    issue(&format!("{field}.oscillator"), e.to_string());
                }
            }
        }
    }

    let node_index = |name: &str| cfg.nodes.iter().position(|n| n.name == name);
    let mut link: Option<(usize, usize, Medium)> = None;
    for (i, lc) in cfg.links.iter().enumerate() {
        let field = format!("links[{i}]");
        let a = node_index(&lc.a);
        let b = node_index(&lc.b);
        if a.is_none() {
            issue(&field, format!("endpoint \"{}\" is not a defined node", lc.a));
        }
        if b.is_none() {
            issue(&field, format!("endpoint \"{}\" is not a defined node", lc.b));
        }
        let medium = match (&lc.path, &lc.fiber) {
            (Some(p), None) => {
                if let Err(e) = p.validate() {
                    issue(&format!("{field}.path"), e.to_string());
                }
                Some(Medium::Path(p.clone()))
            }
            (None, Some(f)) => {
                let fl = FiberLink {
                    length_m: f.length_m,
                    index_fwd: f.index_fwd,
                    index_bwd: f.index_bwd,
                    calibrated_asymmetry: f.calibrated_asymmetry_ps.map(SimDuration::from_ps),
                };
                if let Err(e) = fl.validate() {
                    issue(&format!("{field}.fiber"), e.to_string());
                }
                Some(Medium::Fiber(fl))
            }
            (None, None) => {
                issue(&field, "link needs a medium: \"path\" or \"fiber\"".into());
                None
            }
            (Some(_), Some(_)) => {
                issue(&field, "link must have exactly one medium, got both".into());
                None
            }
        };
        if let (Some(ai), Some(bi), Some(m)) = (a, b, medium) {
            if ai == bi {
                issue(&field, "link endpoints must differ".into());
            } else if link.is_none() {
                link = Some((ai, bi, m));
            }
        }
    }

    let p = &cfg.protocol;
    if p.exchange_interval_ps <= 0 {
        issue(
            "protocol.exchange_interval_ps",
            format!("must be positive, got {}", p.exchange_interval_ps),
        );
    }
    if p.sw_jitter_hi_ps < 0 {
        issue("protocol.sw_jitter_hi_ps", "must be non-negative".into());
    }
    if p.processing_delay_ps.is_some_and(|v| v < 0) {
        issue("protocol.processing_delay_ps", "must be non-negative".into());
    }
    if p.filter_window == 0 {
        issue("protocol.filter_window", "must be at least 1".into());
    }
    if p.phase_resolution_ps <= 0 {
        issue("protocol.phase_resolution_ps", "must be positive".into());
    }
    if p.wr_window == 0 {
        issue("protocol.wr_window", "must be at least 1".into());
    }
    match p.kind {
        ProtocolKind::Gnss => {
            if cfg.nodes.len() != 1 {
                issue(
                    "nodes",
                    format!("GNSS scenarios have exactly one receiver node, got {}", cfg.nodes.len()),
                );
            }
            if !cfg.links.is_empty() {
                issue("links", "GNSS scenarios take no links (the cable lives under protocol.gnss)".into());
            }
            match &p.gnss {
                None => issue("protocol.gnss", "GNSS parameters are required".into()),
                Some(g) => {
                    if g.satellites < 4 {
                        issue(
                            "protocol.gnss.satellites",
                            format!("need at least 4, got {}", g.satellites),
                        );
                    }
                    if g.pseudorange_noise_ps < 0.0 {
                        issue("protocol.gnss.pseudorange_noise_ps", "must be non-negative".into());
                    }
                    if let Some(c) = &g.cable {
                        if !(c.velocity_factor > 0.0 && c.velocity_factor < 1.0) {
                            issue(
                                "protocol.gnss.cable.velocity_factor",
                                format!("must lie in (0, 1), got {}", c.velocity_factor),
                            );
                        }
                    }
                }
            }
        }
        _ => {
            if cfg.nodes.len() != 2 {
                issue(
                    "nodes",
                    format!(
                        "{} scenarios are two-clock (master, slave), got {} nodes",
                        p.kind.name(),
                        cfg.nodes.len()
                    ),
                );
            }
            if cfg.links.len() != 1 {
                issue(
                    "links",
                    format!("{} scenarios need exactly one link, got {}", p.kind.name(), cfg.links.len()),
                );
            }
        }
    }

    if !issues.is_empty() {
        return Err(issues);
    }
    Ok(Scenario {
        seed: cfg.seed.unwrap(),
        duration: SimDuration::from_ps(cfg.duration_ps.unwrap()),
        cadence: SimDuration::from_ps(cfg.sample_cadence_ps),
        steady_fraction: cfg.steady_fraction,
        nodes: cfg.nodes.clone(),
        link,
        protocol: cfg.protocol.clone(),
        out_dir: cfg.outputs.dir.clone(),
        echo,
    })
}

/// The topology part of a config (everything except the protocol and the
/// output paths), used to check that compared scenarios differ only in
/// protocol settings.
pub fn topology_fingerprint(echo: &serde_json::Value) -> serde_json::Value {
    let mut v = echo.clone();
    if let Some(obj) = v.as_object_mut() {
        obj.remove("protocol");
        obj.remove("outputs");
    }
    v
}

/// First rising-edge-aligned sample time and the exchange start used by the
/// runner: exchanges begin one interval in.
pub fn first_exchange_at(protocol: &ProtocolConfig) -> SimTime {
    SimTime::ZERO + SimDuration::from_ps(protocol.exchange_interval_ps)
}
