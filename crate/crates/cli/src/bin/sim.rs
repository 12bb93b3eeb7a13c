//! `sim run` drives a scenario in lockstep; `sim dump-grid` prints the
//! generated world. Exit codes: 0 clean, 2 configuration error, 3 runtime fault.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use shoal_core::sim_server::{load_scenario, ScenarioConfig, Simulation};
use shoal_core::wire::TransportKind;
use shoal_server::{parse_api_addr, RunOptions, ServerError};

/// Sim seconds a headless run covers when no duration is given.
const HEADLESS_DEFAULT_DURATION: f64 = 60.0;

#[derive(Parser)]
#[command(name = "sim", version, about = "Multi-robot underwater lockstep simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario, serving the streaming API unless headless.
    Run {
        scenario: PathBuf,
        /// No API, no pacing; stops after --duration (default 60 s).
        #[arg(long)]
        headless: bool,
        /// API listen address, e.g. `:8080`. Overrides the scenario file.
        #[arg(long)]
        api: Option<String>,
        #[arg(long, value_parser = parse_transport)]
        transport: Option<TransportKind>,
        /// Sim seconds to run; runs until Ctrl-C otherwise.
        #[arg(long)]
        duration: Option<f64>,
        /// Overrides the scenario's noise and planner seed (not the world seed).
        #[arg(long)]
        seed: Option<u64>,
        /// Sim seconds per wall second when serving the API.
        #[arg(long, default_value_t = 1.0)]
        pace: f64,
    },
    /// Print the generated environment as plain text.
    DumpGrid { scenario: PathBuf },
}

fn parse_transport(s: &str) -> Result<TransportKind, String> {
    match s {
        "loopback" => Ok(TransportKind::Loopback),
        "udp" => Ok(TransportKind::Udp),
        other => Err(format!("unknown transport {other:?}; expected loopback or udp")),
    }
}

fn config_error(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("config error: {msg}");
    ExitCode::from(2)
}

fn load(path: &PathBuf) -> Result<ScenarioConfig, ExitCode> {
    load_scenario(path).map_err(config_error)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::DumpGrid { scenario } => {
            let cfg = match load(&scenario) {
                Ok(c) => c,
                Err(code) => return code,
            };
            match cfg.build_environment() {
                Ok(env) => {
                    print!("{}", env.dump());
                    ExitCode::SUCCESS
                }
                Err(e) => config_error(e),
            }
        }
        Command::Run { scenario, headless, api, transport, duration, seed, pace } => {
            let mut cfg = match load(&scenario) {
                Ok(c) => c,
                Err(code) => return code,
            };
            if let Some(t) = transport {
                cfg.transport = t;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(d) = duration {
                if !(d > 0.0) {
                    return config_error("--duration must be > 0");
                }
            }
            if !(pace > 0.0) {
                return config_error("--pace must be > 0");
            }
            let addr = if headless {
                None
            } else {
                match parse_api_addr(api.as_deref().unwrap_or(&cfg.api_addr)) {
                    Ok(a) => Some(a),
                    Err(e) => return config_error(e),
                }
            };
            let opts = RunOptions {
                pace: (!headless).then_some(pace),
                duration: if headless { Some(duration.unwrap_or(HEADLESS_DEFAULT_DURATION)) } else { duration },
            };
            let sim = match Simulation::new(cfg) {
                Ok(s) => s,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(e.exit_code() as u8);
                }
            };
            match shoal_server::run(sim, opts, addr) {
                Ok(summary) => {
                    let out = serde_json::json!({
                        "sim_time": summary.sim_time,
                        "wall_time": summary.wall_time,
                        "real_time_factor": summary.real_time_factor(),
                        "metrics": summary.metrics,
                    });
                    println!("{out}");
                    ExitCode::SUCCESS
                }
                Err(ServerError::Sim(e)) => {
                    eprintln!("runtime fault: {e}");
                    ExitCode::from(e.exit_code() as u8)
                }
                Err(e) => {
                    eprintln!("runtime fault: {e}");
                    ExitCode::from(3)
                }
            }
        }
    }
}
