//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 when a verification check or a run fails,
//! 2 for configuration errors.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use qrepeater::chain::{simulate_chain, sweep, write_csv};
use qrepeater::config::{RunConfig, RunMode, SwapInputs};
use qrepeater::fock::Ensemble;
use qrepeater::io::{write_json, ChainRecord, LinkRecord, SwapRecord};
use qrepeater::link::{psi_plus, run_link_exhaustive, sample_link, LEFT, RIGHT};
use qrepeater::swap::{swap_links, SwapStation};
use qrepeater::verify::{run_verification, VerifyOptions};
use qrepeater::Error;

#[derive(Parser, Debug)]
#[command(name = "qrepeater", version, about = "Polarization-insensitive quantum repeater simulator")]
struct Cli {
    /// JSON run configuration. Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every random draw; overrides the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file. Results go to standard output when no path is set.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Enumerate outcomes exactly or sample them.
    #[arg(long, global = true, value_enum)]
    mode: Option<RunMode>,
    /// Monte Carlo trials for sampled and chain runs.
    #[arg(long, global = true)]
    trials: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Recompute the protocol's amplitudes and probabilities and compare.
    Verify,
    /// Elementary link generation.
    Link,
    /// One entanglement swap.
    Swap,
    /// Monte Carlo of a nested repeater chain.
    Chain,
    /// Chain statistics over a parameter grid, written as CSV.
    Sweep,
}

enum Failure {
    Config(Error),
    Run(Error),
    Checks,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config { .. } => Failure::Config(e),
            other => Failure::Run(other),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Run(e.into())
    }
}

fn load(cli: &Cli) -> Result<RunConfig, Failure> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path).map_err(Failure::Config)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        config.seed = s;
    }
    if let Some(o) = &cli.out {
        config.out = Some(o.clone());
    }
    if let Some(m) = cli.mode {
        config.mode = m;
    }
    if let Some(t) = cli.trials {
        config.trials = t;
    }
    config.validate().map_err(Failure::Config)?;
    Ok(config)
}

fn sink(config: &RunConfig) -> Result<Box<dyn Write>, Failure> {
    Ok(match &config.out {
        Some(path) => Box::new(BufWriter::new(File::create(path).map_err(|e| {
            Failure::Config(Error::Config {
                key: "out".into(),
                reason: format!("cannot create {}: {e}", path.display()),
            })
        })?)),
        None => Box::new(io::stdout().lock()),
    })
}

/// Write the record; print the summary only when the record went to a file,
/// so standard output stays machine-readable otherwise.
fn emit<T: Serialize>(config: &RunConfig, record: &T, summary: &str) -> Result<(), Failure> {
    let mut out = sink(config)?;
    write_json(record, &mut out)?;
    out.flush()?;
    if config.out.is_some() {
        println!("{summary}");
    }
    Ok(())
}

#[derive(Serialize)]
struct SwapSampleRecord {
    trials: usize,
    accepted: usize,
    frequency: f64,
    expected_frequency: f64,
}

fn cmd_verify(config: &RunConfig) -> Result<(), Failure> {
    let report = run_verification(&VerifyOptions {
        seed: config.seed,
        ..VerifyOptions::default()
    });
    println!("{report}");
    if let Some(path) = &config.out {
        let mut out = BufWriter::new(File::create(path)?);
        write_json(&report, &mut out)?;
        out.flush()?;
    }
    if report.all_passed() {
        Ok(())
    } else {
        Err(Failure::Checks)
    }
}

fn cmd_link(config: &RunConfig) -> Result<(), Failure> {
    match config.mode {
        RunMode::Exhaustive => {
            let report = run_link_exhaustive(&config.link)?;
            let record = LinkRecord::from_report(&report)?;
            let weights: Vec<String> = record
                .mixture
                .iter()
                .map(|m| format!("{}={:.6}", m.component, m.weight))
                .collect();
            let summary = format!(
                "link acceptance {:.6e}; mixture {}",
                record.acceptance_probability,
                weights.join(" ")
            );
            emit(config, &record, &summary)
        }
        RunMode::Sampled => {
            let s = sample_link(&config.link, config.seed, config.trials as u64)?;
            let summary = format!(
                "link acceptance frequency {:.6e} ± {:.1e} over {} trials (exhaustive {:.6e})",
                s.frequency, s.std_error, s.trials, s.expected_frequency
            );
            emit(config, &s, &summary)
        }
    }
}

fn cmd_swap(config: &RunConfig) -> Result<(), Failure> {
    let mut station = SwapStation::new("A", "B")?;
    station.detector = config.swap.detector;
    station.retrieval_efficiency = config.swap.retrieval_efficiency;
    let link = match config.swap.inputs {
        SwapInputs::Links => run_link_exhaustive(&config.link)?.heralded_ensemble()?,
        SwapInputs::Ideal => Ensemble::pure(psi_plus(LEFT, RIGHT)?)?,
    };
    let report = swap_links(&station, &link, &link, config.swap.level)?;
    match config.mode {
        RunMode::Exhaustive => {
            let record = SwapRecord::from_report(&report);
            let summary = format!(
                "swap acceptance {:.6e}; fidelity {}",
                record.acceptance_probability,
                record.fidelity.map_or("n/a".into(), |f| format!("{f:.12}"))
            );
            emit(config, &record, &summary)
        }
        RunMode::Sampled => {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            let total: f64 = report.outcomes.iter().map(|o| o.probability).sum();
            let mut accepted = 0;
            for _ in 0..config.trials {
                let mut u = rng.random::<f64>() * total;
                let hit = report.outcomes.iter().find(|o| {
                    let inside = u < o.probability;
                    u -= o.probability;
                    inside
                });
                if hit.is_some_and(|o| o.accepted) {
                    accepted += 1;
                }
            }
            let record = SwapSampleRecord {
                trials: config.trials,
                accepted,
                frequency: accepted as f64 / config.trials as f64,
                expected_frequency: report.acceptance_probability / total,
            };
            let summary = format!(
                "swap acceptance frequency {:.6e} over {} trials (exhaustive {:.6e})",
                record.frequency, record.trials, record.expected_frequency
            );
            emit(config, &record, &summary)
        }
    }
}

fn cmd_chain(config: &RunConfig) -> Result<(), Failure> {
    let stats = simulate_chain(&config.chain_config(), config.seed, config.trials)?;
    let summary = format!(
        "{} segments: {}/{} completed, mean attempts {:.3} ± {:.3}, fidelity mean {:.12}",
        config.chain.segments,
        stats.completed,
        stats.trials,
        stats.mean_attempts,
        stats.attempts_half_width,
        stats.fidelity_mean
    );
    emit(config, &ChainRecord { seed: config.seed, stats }, &summary)
}

fn cmd_sweep(config: &RunConfig) -> Result<(), Failure> {
    let rows = sweep(&config.sweep_grid(), config.seed, config.trials)?;
    let mut out = sink(config)?;
    write_csv(&rows, &mut out)?;
    out.flush()?;
    if config.out.is_some() {
        println!("sweep: {} cells written", rows.len());
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let config = load(cli)?;
    match cli.command {
        Command::Verify => cmd_verify(&config),
        Command::Link => cmd_link(&config),
        Command::Swap => cmd_swap(&config),
        Command::Chain => cmd_chain(&config),
        Command::Sweep => cmd_sweep(&config),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Checks) => {
            eprintln!("qrepeater: verification failed");
            ExitCode::from(1)
        }
        Err(Failure::Run(e)) => {
            eprintln!("qrepeater: {e}");
            ExitCode::from(1)
        }
        Err(Failure::Config(e)) => {
            eprintln!("qrepeater: {e}");
            ExitCode::from(2)
        }
    }
}
