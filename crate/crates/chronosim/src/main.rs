use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::error;

use chronosim::harness::{
    compare_protocols, report_json, run_scenario, validate_config, write_outputs, Scenario,
};

/// Deterministic clock-synchronization simulator.
#[derive(Parser)]
#[command(name = "chronosim", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its series CSVs and JSON report.
    Run {
        /// Scenario config (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Override the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (overrides the scenario's `outputs.dir`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run several scenarios sharing a topology and print a precision
    /// ranking.
    Compare {
        /// Scenario configs differing only in protocol settings.
        #[arg(long, num_args = 1.., required = true)]
        configs: Vec<PathBuf>,
        /// Directory for the merged comparison report.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Validate a scenario config and report every problem.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

const EXIT_VALIDATION: u8 = 1;
const EXIT_RUNTIME: u8 = 2;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter("CHRONOSIM_LOG")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, seed, out } => cmd_run(config, seed, out),
        Command::Compare { configs, out } => cmd_compare(configs, out),
        Command::Validate { config } => cmd_validate(config),
    }
}

fn load_scenario(path: &PathBuf, seed_override: Option<u64>) -> Result<Scenario, ExitCode> {
    let raw = match fs::read_to_string(path) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", path.display());
            return Err(ExitCode::from(EXIT_VALIDATION));
        }
    };
    match validate_config(&raw) {
        Ok(mut scn) => {
            if let Some(seed) = seed_override {
                scn.seed = seed;
                if let Some(obj) = scn.echo.as_object_mut() {
                    obj.insert("seed".into(), serde_json::json!(seed));
                }
            }
            Ok(scn)
        }
        Err(issues) => {
            eprintln!("{}: {} validation error(s)", path.display(), issues.len());
            for issue in issues {
                eprintln!("  {issue}");
            }
            Err(ExitCode::from(EXIT_VALIDATION))
        }
    }
}

fn cmd_run(config: PathBuf, seed: Option<u64>, out: Option<PathBuf>) -> ExitCode {
    let scn = match load_scenario(&config, seed) {
        Ok(s) => s,
        Err(code) => return code,
    };
    let out_dir = out.or_else(|| scn.out_dir.clone());
    let outcome = match run_scenario(&scn) {
        Ok(o) => o,
        Err(e) => {
            error!("run failed: {e}");
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_RUNTIME);
        }
    };
    for node in &outcome.report.nodes {
        println!(
            "{:<16} steady max |err| {:>14} ps   rms {:>14} ps",
            node.name, node.steady_state.max_abs_error_ps, node.steady_state.rms_error_ps
        );
    }
    if let Some(dir) = out_dir {
        if let Err(e) = write_outputs(&outcome, &dir) {
            eprintln!("error: writing outputs to {}: {e}", dir.display());
            return ExitCode::from(EXIT_RUNTIME);
        }
        println!("wrote {}", dir.join("report.json").display());
    } else {
        print!("{}", report_json(&outcome.report));
    }
    ExitCode::SUCCESS
}

fn cmd_compare(configs: Vec<PathBuf>, out: Option<PathBuf>) -> ExitCode {
    let mut scenarios = Vec::new();
    for path in &configs {
        let scn = match load_scenario(path, None) {
            Ok(s) => s,
            Err(code) => return code,
        };
        let label = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        scenarios.push((label, scn));
    }
    match compare_protocols(&scenarios) {
        Ok((table, _)) => {
            print!("{table}");
            if let Some(dir) = out {
                if let Err(e) = fs::create_dir_all(&dir).and_then(|_| {
                    let mut s = serde_json::to_string_pretty(&table).expect("table serializes");
                    s.push('\n');
                    fs::write(dir.join("compare.json"), s)
                }) {
                    eprintln!("error: writing comparison report: {e}");
                    return ExitCode::from(EXIT_RUNTIME);
                }
            }
            ExitCode::SUCCESS
        }
        Err(e @ chronosim::harness::CompareError::TopologyMismatch { .. }) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_VALIDATION)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}

fn cmd_validate(config: PathBuf) -> ExitCode {
    match load_scenario(&config, None) {
        Ok(scn) => {
            println!(
                "ok: {} nodes, protocol {}, duration {} ps, seed {}",
                scn.nodes.len(),
                scn.protocol.kind.name(),
                scn.duration.ps(),
                scn.seed
            );
            ExitCode::SUCCESS
        }
        Err(code) => code,
    }
}
