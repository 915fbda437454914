use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use mfris_core::bench::{self, Scenario};

#[derive(Parser)]
#[command(name = "mfris-bench", version, about = "Monte Carlo sweeps for MF-RIS beamforming")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write `<name>.csv` plus a manifest.
    Run {
        scenario: PathBuf,
        #[arg(long, default_value = "results")]
        out: PathBuf,
        /// Override n_trials.
        #[arg(long)]
        trials: Option<usize>,
        /// Override base_seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads (default: all cores).
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Mean, std and count per (architecture, sweep value).
    Summarize { csv: PathBuf },
    /// Compare alternating optimization with exhaustive search.
    OracleCheck {
        scenario: PathBuf,
        #[arg(long)]
        jobs: Option<usize>,
    },
}

fn pool(jobs: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        if j == 0 {
            bail!("--jobs must be positive");
        }
        b = b.num_threads(j);
    }
    Ok(b.build()?)
}

fn load(path: &PathBuf) -> Result<Scenario> {
    Scenario::from_file(path).with_context(|| format!("loading {}", path.display()))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            scenario,
            out,
            trials,
            seed,
            jobs,
        } => {
            let mut sc = load(&scenario)?;
            if let Some(t) = trials {
                sc.n_trials = t;
            }
            if let Some(s) = seed {
                sc.base_seed = s;
            }
            sc.validate()?;
            let (rows, path) = pool(jobs)?.install(|| bench::run_to_dir(&sc, &out))?;
            let failed = rows.iter().filter(|r| !r.is_ok()).count();
            eprintln!("{} rows ({failed} failed) -> {}", rows.len(), path.display());
            if failed == rows.len() {
                bail!("every row failed");
            }
        }
        Command::Summarize { csv } => {
            let file = std::fs::File::open(&csv).with_context(|| format!("opening {}", csv.display()))?;
            let s = bench::summarize(&bench::read_samples(file)?)?;
            println!("architecture,sweep_var,sweep_value,mean,std,count,failed");
            for r in &s.rows {
                println!(
                    "{},{},{},{:.6},{:.6},{},{}",
                    r.architecture, r.sweep_var, r.sweep_value, r.mean, r.std, r.count, r.failed
                );
            }
            if s.failed_rows > 0 || s.omitted_groups > 0 {
                eprintln!(
                    "warning: {} failed rows excluded, {} groups omitted",
                    s.failed_rows, s.omitted_groups
                );
            }
        }
        Command::OracleCheck { scenario, jobs } => {
            let sc = load(&scenario)?;
            let rows = pool(jobs)?.install(|| bench::oracle_check(&sc))?;
            println!("architecture,sweep_value,trial,seed,ao_rate,oracle_rate,ratio");
            for r in &rows {
                println!(
                    "{},{},{},{},{:.6},{:.6},{:.4}",
                    r.architecture.key(),
                    r.sweep_value,
                    r.trial,
                    r.seed,
                    r.ao_rate,
                    r.oracle_rate,
                    r.ratio()
                );
            }
            let dominated = rows.iter().filter(|r| r.oracle_rate >= r.ao_rate - 1e-9).count();
            let close = rows.iter().filter(|r| r.ratio() >= 0.9).count();
            eprintln!(
                "oracle >= AO on {dominated}/{n}; AO >= 0.9 oracle on {close}/{n}",
                n = rows.len()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
