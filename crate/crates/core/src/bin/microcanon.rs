use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use microcanon::experiment::{self, ExperimentConfig, Mode};
use microcanon::{validate_assumptions, Error, ProbeGrid};

#[derive(Parser)]
#[command(name = "microcanon", version, about = "Microcanonical ensembles with several moment constraints")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the configuration and the growth conditions of its observables.
    Validate(Common),
    /// Solve the reduced and full moment problems.
    Solve(Common),
    /// Classify the targets into a phase.
    Classify(Common),
    /// Scan the rate function along the last coordinate.
    Rate(Common),
    /// Sample the constraint shell on the (n, delta) grid.
    Sample(Common),
    /// Exact marginals for n in {2, 3}.
    Bruteforce(Common),
    /// Sample, then check the results against the expected behaviour.
    Verify(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed in the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the output directory in the configuration.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load(c: &Common, mode: Option<Mode>) -> Result<ExperimentConfig, Error> {
    let mut cfg = ExperimentConfig::load(&c.config)?;
    if let Some(m) = mode {
        cfg.mode = m;
    }
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(o) = &c.out {
        cfg.output_dir = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn execute(cli: Cli) -> Result<(), Error> {
    let (common, mode) = match &cli.command {
        Command::Validate(c) => (c, None),
        Command::Solve(c) => (c, Some(Mode::Solve)),
        Command::Classify(c) => (c, Some(Mode::Classify)),
        Command::Rate(c) => (c, Some(Mode::Rate)),
        Command::Sample(c) => (c, Some(Mode::Sample)),
        Command::Bruteforce(c) => (c, Some(Mode::Bruteforce)),
        Command::Verify(c) => (c, Some(Mode::Verify)),
    };
    let cfg = load(common, mode)?;
    let Some(_) = mode else {
        let report = validate_assumptions(&cfg.set()?, &ProbeGrid::default())?;
        println!("{}", serde_json::to_string_pretty(&report)?);
        return if report.passed {
            Ok(())
        } else {
            Err(Error::InvalidObservableSet("growth conditions not certified".into()))
        };
    };
    let outcome = experiment::run(&cfg)?;
    println!("{} -> {}", cfg.mode.name(), outcome.dir.display());
    for f in &outcome.files {
        println!("  {f}");
    }
    if let Some(v) = &outcome.verify {
        for c in &v.checks {
            println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 2 } else { 1 })
        }
    }
}
