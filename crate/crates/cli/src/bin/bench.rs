//! `bench run` sweeps planners over seeded scenario variants and writes a
//! CSV or JSON report. Exit codes: 0 clean, 2 configuration error, 3 fault.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use shoal_core::bench::{load_bench, parse_planners, parse_seeds, sweep, write_report, BenchError};
use shoal_core::exec::ExecPolicy;

#[derive(Parser)]
#[command(name = "bench", version, about = "Seeded planner benchmark sweeps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    Run {
        scenario_file: PathBuf,
        /// Comma list of rrt, rrtc, prm. Defaults to the file's list.
        #[arg(long)]
        planners: Option<String>,
        /// Inclusive range `a..b` or a comma list. Defaults to the file's seeds.
        #[arg(long)]
        seeds: Option<String>,
        /// Report path ending in .csv or .json.
        #[arg(long)]
        out: PathBuf,
        /// Run jobs one at a time.
        #[arg(long)]
        sequential: bool,
    },
}

fn run(scenario_file: PathBuf, planners: Option<String>, seeds: Option<String>, out: PathBuf, sequential: bool) -> Result<(), BenchError> {
    if shoal_core::bench::ReportFormat::from_path(&out).is_none() {
        return Err(BenchError::Load { path: out.display().to_string(), reason: "--out must end in .csv or .json".into() });
    }
    let spec = load_bench(&scenario_file)?;
    let planners = match planners {
        Some(p) => parse_planners(&p)?,
        None => spec.planners.clone(),
    };
    let seeds = match seeds {
        Some(s) => parse_seeds(&s)?,
        None => spec.seeds.clone(),
    };
    if planners.is_empty() {
        return Err(BenchError::Load { path: scenario_file.display().to_string(), reason: "no planners given".into() });
    }
    let policy = if sequential { ExecPolicy::Sequential } else { ExecPolicy::Parallel };
    log::info!("{} scenarios x {} planners x {} seeds", spec.scenarios.len(), planners.len(), seeds.len());
    let report = sweep(&spec.scenarios, &planners, &seeds, policy)?;
    for a in &report.summary {
        println!(
            "{:<20} {:<5} runs {:>4}  success {:>6.1}%  median plan {:.3}s  mean exec {}",
            a.scenario,
            a.planner.to_string(),
            a.runs,
            100.0 * a.success_rate,
            a.median_computation_time,
            a.mean_execution_time.map_or("-".into(), |t| format!("{t:.2}s")),
        );
    }
    for f in write_report(&report, &out)? {
        log::info!("wrote {}", f.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let Command::Run { scenario_file, planners, seeds, out, sequential } = Cli::parse().command;
    match run(scenario_file, planners, seeds, out, sequential) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
