use anyhow::Context;
use cellgrid_core::drm::SolverKind;
use cellgrid_core::scenario::{
    emit_outputs, load_config_with, parse_config, run_pipeline, McSettings, Overrides, PointStatus, Profile, Sweep,
};
use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

/// Energy demand and supplier allocation for smart-grid powered cellular
/// networks.
#[derive(Parser)]
#[command(name = "cellgrid", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario (or sweep) and write CSV, JSON and SVG outputs.
    Run(RunArgs),
    /// Print a built-in profile as TOML.
    Profile {
        #[arg(value_parser = parse_profile)]
        name: Profile,
    },
}

#[derive(clap::Args)]
struct RunArgs {
    /// Scenario file; may be omitted when --profile is given.
    config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Built-in profile the file is layered on (paper-baseline, fig1).
    #[arg(long, value_parser = parse_profile)]
    profile: Option<Profile>,
    /// Replace the sweep: AXIS=v1,v2,...
    #[arg(long, value_parser = parse_sweep)]
    sweep: Option<Sweep>,
    /// Monte Carlo coverage trials per operator and sweep point.
    #[arg(long, requires = "seed")]
    mc_trials: Option<usize>,
    #[arg(long, requires = "mc_trials")]
    seed: Option<u64>,
    #[arg(long, value_parser = parse_solver)]
    solver: Option<SolverKind>,
}

fn parse_profile(s: &str) -> Result<Profile, String> {
    s.parse().map_err(|e: cellgrid_core::Error| e.to_string())
}

fn parse_sweep(s: &str) -> Result<Sweep, String> {
    s.parse().map_err(|e: cellgrid_core::Error| e.to_string())
}

fn parse_solver(s: &str) -> Result<SolverKind, String> {
    s.parse().map_err(|e: cellgrid_core::Error| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Profile { name } => {
            print!("{}", name.source());
            ExitCode::SUCCESS
        }
        Command::Run(args) => match run(args) {
            Ok(code) => code,
            Err(e) => {
                eprintln!("error: {e:#}");
                ExitCode::from(1)
            }
        },
    }
}

fn run(args: RunArgs) -> anyhow::Result<ExitCode> {
    let overrides = Overrides {
        profile: args.profile,
        sweep: args.sweep,
        mc: args.mc_trials.zip(args.seed).map(|(trials, seed)| McSettings { trials, seed }),
        solver: args.solver,
    };
    let cfg = match &args.config {
        Some(path) => load_config_with(path, &overrides).with_context(|| format!("loading {}", path.display()))?,
        None if overrides.profile.is_some() => parse_config("", &overrides)?,
        None => anyhow::bail!("give a scenario file or --profile"),
    };

    let results = run_pipeline(&cfg);
    // Output failures are not configuration errors, but there is nothing
    // useful to report as partial success either.
    let manifest = match emit_outputs(&cfg, &results, &args.out) {
        Ok(m) => m,
        Err(e) => {
            eprintln!("error: {e}");
            return Ok(ExitCode::from(1));
        }
    };

    for r in &results {
        if let Some(reason) = &r.reason {
            let at = r.axis_value.map(|v| format!(" at {v}")).unwrap_or_default();
            eprintln!("{}{at}: {reason}", r.status);
        }
    }
    let solved = results.iter().filter(|r| r.status == PointStatus::Solved).count();
    println!("{solved}/{} points solved; wrote {} files to {}", results.len(), manifest.files.len(), args.out.display());
    Ok(if solved == results.len() { ExitCode::SUCCESS } else { ExitCode::from(2) })
}
