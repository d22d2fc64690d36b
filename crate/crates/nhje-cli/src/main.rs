//! nhje: scenario orchestration for the postselected non-Hermitian two-level
//! simulator. Subcommands map one-to-one onto the nhje-core pipelines;
//! presets reproduce whole figure data sets in a single run.
//!
//! Exit codes: 0 on success, 2 for configuration or usage errors, 3 for a
//! numerical failure (the message names the failing stage), 1 for I/O
//! trouble. The environment variable NHJE_THREADS caps worker parallelism.

mod artifact;
mod config;
mod error;
mod pipelines;
mod presets;

use artifact::{write_artifacts, Artifact, OutputFormat};
use clap::{Args, Parser, Subcommand};
use config::ScenarioConfig;
use error::{CliError, Result};
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "nhje",
    version,
    about = "Postselected non-Hermitian two-level dynamics: deterministic sweeps, shot emulation, Floquet extraction, revival search, and figure-data presets"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Deterministic transition-probability and work sweep, or a named preset
    Simulate(SimulateArgs),
    /// Finite-shot Monte Carlo emulation over the duration grid
    Shots(RunArgs),
    /// Postselected Bloch trajectories from both initial eigenstates
    Bloch(RunArgs),
    /// Effective Floquet generator extraction at each grid duration
    Floquet(RunArgs),
    /// Symmetry-revival search across the duration window
    Revival(RunArgs),
    /// Relative and full-norm survival scan over the duration grid
    Survival(RunArgs),
    /// Inspect the built-in presets
    Presets(PresetsArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario file (TOML)
    #[arg(long, value_name = "PATH", required_unless_present = "preset", conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in preset name; see `nhje presets list`
    #[arg(long, value_name = "NAME")]
    preset: Option<String>,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file (TOML)
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct CommonArgs {
    /// Output directory; overrides [output].dir, defaults to the working dir
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Master-seed override for the stochastic stages
    #[arg(long)]
    seed: Option<u64>,
    /// Resolution override: integrator steps per point (simulate), samples
    /// per trajectory (bloch), phase-grid intervals per duration (floquet)
    #[arg(long)]
    steps: Option<usize>,
    /// Artifact encoding
    #[arg(long, value_enum, default_value_t = OutputFormat::Csv)]
    format: OutputFormat,
}

#[derive(Args)]
struct PresetsArgs {
    #[command(subcommand)]
    action: PresetsCmd,
}

#[derive(Subcommand)]
enum PresetsCmd {
    /// List every preset with a one-line summary
    List,
}

fn main() {
    let cli = Cli::parse();
    apply_thread_cap();
    if let Err(e) = run(cli) {
        eprintln!("{e}");
        std::process::exit(e.exit_code());
    }
}

/// Honors NHJE_THREADS before any parallel work starts.
fn apply_thread_cap() {
    if let Ok(v) = std::env::var("NHJE_THREADS") {
        match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => {
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global();
            }
            _ => eprintln!("warning: ignoring NHJE_THREADS={v}; expected a positive integer"),
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Simulate(args) => {
            check_steps(args.common.steps)?;
            match (&args.config, &args.preset) {
                (Some(path), None) => {
                    let cfg = config::load(path)?;
                    let arts = pipelines::simulate(&cfg, args.common.format, args.common.steps)?;
                    emit(arts, out_dir(&args.common.out, Some(&cfg)))
                }
                (None, Some(name)) => {
                    let arts = presets::build(name, args.common.format, args.common.seed)?;
                    emit(arts, out_dir(&args.common.out, None))
                }
                _ => unreachable!("clap enforces exactly one scenario source"),
            }
        }
        Cmd::Shots(args) => {
            let cfg = config::load(&args.config)?;
            let arts = pipelines::shots(&cfg, args.common.format, args.common.seed)?;
            emit(arts, out_dir(&args.common.out, Some(&cfg)))
        }
        Cmd::Bloch(args) => {
            check_steps(args.common.steps)?;
            let cfg = config::load(&args.config)?;
            let arts = pipelines::bloch(&cfg, args.common.format, args.common.steps)?;
            emit(arts, out_dir(&args.common.out, Some(&cfg)))
        }
        Cmd::Floquet(args) => {
            check_steps(args.common.steps)?;
            let cfg = config::load(&args.config)?;
            let arts = pipelines::floquet(&cfg, args.common.format, args.common.steps)?;
            emit(arts, out_dir(&args.common.out, Some(&cfg)))
        }
        Cmd::Revival(args) => {
            let cfg = config::load(&args.config)?;
            let arts = pipelines::revival(&cfg, args.common.format)?;
            emit(arts, out_dir(&args.common.out, Some(&cfg)))
        }
        Cmd::Survival(args) => {
            let cfg = config::load(&args.config)?;
            let arts = pipelines::survival(&cfg, args.common.format)?;
            emit(arts, out_dir(&args.common.out, Some(&cfg)))
        }
        Cmd::Presets(args) => match args.action {
            PresetsCmd::List => {
                print!("{}", presets::render_list());
                Ok(())
            }
        },
    }
}

fn check_steps(steps: Option<usize>) -> Result<()> {
    if steps == Some(0) {
        return Err(CliError::Config("--steps must be positive".into()));
    }
    Ok(())
}

/// Flag > config [output].dir > working directory.
fn out_dir(flag: &Option<PathBuf>, cfg: Option<&ScenarioConfig>) -> PathBuf {
    flag.clone()
        .or_else(|| cfg.and_then(|c| c.output.dir.clone()))
        .unwrap_or_else(|| PathBuf::from("."))
}

fn emit(arts: Vec<Artifact>, dir: PathBuf) -> Result<()> {
    let paths = write_artifacts(&dir, &arts)?;
    for p in paths {
        println!("wrote {}", p.display());
    }
    Ok(())
}
