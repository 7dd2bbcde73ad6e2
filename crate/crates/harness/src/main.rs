use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use isacform_harness::checks::{run_selftest, SelftestOptions};
use isacform_harness::config::{GridSpec, ScenarioDoc};
use isacform_harness::experiments;
use isacform_harness::output::ExperimentResult;

#[derive(Parser)]
#[command(name = "isacform", version, about = "UAV formation flight and ISAC beamforming experiments")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// Scenario document (TOML); built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the scenario seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Upwash grid as `x0:x1:nx,y0:y1:ny`.
    #[arg(long, global = true, allow_hyphen_values = true)]
    grid: Option<String>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulates every formation group.
    Formation,
    /// Tabulates the upwash field over a grid.
    UpwashMap,
    /// Designs beamformers and runs the baselines and sweeps.
    Beamform,
    /// Re-prices achieved rates under scaled noise variances.
    LqrSweep,
    /// Runs the fast invariant suite.
    Selftest {
        #[arg(long, hide = true)]
        mutate_gradient: bool,
    },
}

fn report(r: &ExperimentResult) {
    println!("{} [{}] in {:.2} s", r.experiment, &r.input_digest[..12], r.wall_clock_s);
    for o in &r.outputs {
        println!("  {o}");
    }
}

fn run(cli: Cli) -> Result<bool> {
    let c = &cli.common;
    let doc = match &c.config {
        Some(p) => ScenarioDoc::load(p)?,
        None => ScenarioDoc::default(),
    };
    let seed = c.seed.unwrap_or(doc.seed);
    let grid = c.grid.as_deref().map(GridSpec::parse).transpose()?;
    match cli.cmd {
        Cmd::Formation => report(&experiments::cmd_formation(&doc, seed, &c.out)?),
        Cmd::UpwashMap => report(&experiments::cmd_upwash_map(&doc, grid.as_ref(), &c.out)?),
        Cmd::Beamform => report(&experiments::cmd_beamform(&doc, seed, &c.out)?),
        Cmd::LqrSweep => report(&experiments::cmd_lqr_sweep(&doc, seed, &c.out)?),
        Cmd::Selftest { mutate_gradient } => {
            let checks = run_selftest(SelftestOptions { mutate_gradient });
            for ch in &checks {
                let tag = if ch.passed { "PASS" } else { "FAIL" };
                println!("{tag} {} ({}; {:.2} s)", ch.name, ch.detail, ch.seconds);
            }
            return Ok(checks.iter().all(|c| c.passed));
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
