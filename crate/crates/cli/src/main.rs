//! `asvkit` command-line front end.

mod commands;
mod config;
mod output;
mod report;

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(name = "asvkit", version, about = "Survey ASV simulation and batch processing")]
struct Cli {
    /// Seed for every random stream of the run.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory receiving every artifact and the run manifest.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    /// off, error, warn, info, debug or trace.
    #[arg(long, global = true, default_value = "warn")]
    log_level: log::LevelFilter,
    /// TOML file with a table per subcommand; flags win over file values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Plan a lawnmower survey and write it as GeoJSON.
    Plan(commands::PlanArgs),
    /// Fly a plan over a simulated seabed and log the sensors.
    Simulate(commands::SimulateArgs),
    /// Simulate a closed-loop beacon tracking session.
    TrackSim(commands::TrackSimArgs),
    /// Solve the raw acoustic records of a log into beacon fixes.
    SblSolve(commands::SblSolveArgs),
    /// Run the depth-correction pipeline and grid the result.
    ProcessBathy(commands::ProcessBathyArgs),
    /// Check photogrammetric overlap along a logged track.
    CheckOverlap(commands::CheckOverlapArgs),
    /// Summarize artifacts produced by the other subcommands.
    Report(report::ReportArgs),
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let file = config::ConfigFile::load(cli.config.as_deref())?;
    let seed = cli.seed.or(file.seed()).unwrap_or(1);
    let mut out = output::Output::new(cli.out_dir, seed);
    if let Some(path) = &cli.config {
        out.record_input(path)?;
    }
    match cli.command {
        Command::Plan(a) => commands::plan(file.merge("plan", a)?, &mut out)?,
        Command::Simulate(a) => commands::simulate(file.merge("simulate", a)?, &mut out)?,
        Command::TrackSim(a) => commands::track_sim(file.merge("track-sim", a)?, &mut out)?,
        Command::SblSolve(a) => commands::sbl_solve(file.merge("sbl-solve", a)?, &mut out)?,
        Command::ProcessBathy(a) => commands::process_bathy(file.merge("process-bathy", a)?, &mut out)?,
        Command::CheckOverlap(a) => commands::check_overlap(file.merge("check-overlap", a)?, &mut out)?,
        Command::Report(a) => report::report(file.merge("report", a)?, &mut out)?,
    }
    out.write_manifest()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new().filter_level(cli.log_level).format_timestamp(None).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
