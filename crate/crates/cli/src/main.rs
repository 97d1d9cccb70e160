use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use cqrsub_cli::commands::{self, method_name};
use cqrsub_cli::config::{DataFlags, KeyValues, RunConfig, SimFlags, SimRunConfig};
use cqrsub_cli::{exit, CliError, CliResult};

/// Composite quantile regression on sharded data via optimal subsampling.
///
/// Exit codes: 0 success, 1 output or other failure, 2 configuration,
/// 3 ingestion, 4 estimation (solver) failure.
#[derive(Parser, Debug)]
#[command(name = "cqrsub", version)]
struct Cli {
    /// key = value file with defaults for any long flag
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Log level: -v info, -vv debug
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Combined estimate from B subsample draws, with confidence intervals
    Estimate(DataFlags),
    /// Write the subsampling plan as JSON without estimating
    Plan(DataFlags),
    /// Compare variance traces of uniform and L-optimal sampling on a small data set
    Diagnose(DataFlags),
    /// Monte Carlo experiment on simulated shards
    Simulate(SimFlags),
}

fn data_config(flags: &DataFlags, file: Option<&PathBuf>) -> CliResult<RunConfig> {
    let kv = file.map(|p| KeyValues::read(p)).transpose()?;
    RunConfig::resolve(flags, kv.as_ref())
}

fn run(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Estimate(flags) => {
            let cfg = data_config(flags, cli.config.as_ref())?;
            let out = commands::estimate(&cfg)?;
            let rep = &out.report;
            println!(
                "method {}  n = {}  K = {}  r = {}  B = {}  r_ef = {:.4}",
                method_name(rep.method),
                rep.input.rows,
                rep.input.shards.len(),
                rep.r,
                rep.b,
                rep.r_ef
            );
            let level = 100.0 * (1.0 - rep.alpha);
            println!("{:<16} {:>12} {:>12} {:>12}", "parameter", "estimate", "lower", "upper");
            for c in rep.intervals.iter().take(rep.theta_l.beta.len()) {
                println!("{:<16} {:>12.6} {:>12.6} {:>12.6}", c.name, c.estimate, c.lower, c.upper);
            }
            println!("{level}% intervals; full output in {}", out.result_path.display());
        }
        Command::Plan(flags) => {
            let cfg = data_config(flags, cli.config.as_ref())?;
            let (rep, path) = commands::plan(&cfg)?;
            println!("allocations {:?}", rep.plan.allocations());
            println!("plan written to {}", path.display());
        }
        Command::Diagnose(flags) => {
            let cfg = data_config(flags, cli.config.as_ref())?;
            let (rep, path) = commands::diagnose(&cfg)?;
            println!(
                "tr(V) uniform {:.6e}  L-opt {:.6e}  bound {:.6e}",
                rep.trace_uniform, rep.trace_lopt, rep.trace_lower_bound
            );
            println!("uniform / L-opt = {:.4}; written to {}", rep.uniform_over_lopt, path.display());
        }
        Command::Simulate(flags) => {
            let file = flags
                .sim_config
                .as_ref()
                .or(cli.config.as_ref())
                .ok_or_else(|| CliError::Config("simulate needs --sim-config".into()))?;
            let cfg = SimRunConfig::resolve(flags, Some(&KeyValues::read(file)?))?;
            let rep = commands::simulate(&cfg)?;
            for s in &rep.method_summaries {
                println!(
                    "{:<8} r = {:<5} bias {:>10.6}  sd {:>9.6}  mse {:>9.6}",
                    method_name(s.method),
                    s.r,
                    s.bias,
                    s.sd,
                    s.mse
                );
            }
            for s in &rep.multi_summaries {
                println!("B = {:<4} emse {:>9.6}  amse {:>9.6}  cp {:.3}", s.b, s.emse, s.amse, s.coverage);
            }
            if !rep.failures.is_empty() {
                println!("{} replications failed", rep.failures.len());
            }
            println!("written to {}", cfg.out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(()) => ExitCode::from(exit::OK as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
