use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use isac_pf_core::harness::{build_scenario, emit_report, run_multipoint, run_tracking, write_csv, ReportFormat};
use isac_pf_core::{selftest, Method, RunReport, ScenarioSpec};

#[derive(Parser)]
#[command(name = "isac-pf", version, about = "Signal-level particle-filter tracking for MIMO-OFDM ISAC")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte-Carlo single-station tracking run.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "pf_sltr")]
        method: Method,
        /// Overrides the config's trial count.
        #[arg(long)]
        trials: Option<usize>,
        /// Overrides the config's master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Directory for `<method>.csv` and `<method>.txt`; summary only
        /// goes to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Multi-station PF-SLTR with per-step posterior fusion.
    Fuse {
        #[arg(long)]
        config: PathBuf,
        /// Number of stations to use (the first Z of the config).
        #[arg(long)]
        stations: usize,
        #[arg(long)]
        kappa: Option<f64>,
        #[arg(long)]
        n_mci: Option<usize>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the built-in oracle checks.
    Selftest,
}

fn load(config: &PathBuf, seed: Option<u64>) -> Result<ScenarioSpec> {
    let mut spec = ScenarioSpec::load(config).with_context(|| format!("loading {}", config.display()))?;
    if let Some(s) = seed {
        spec.seed = s;
    }
    Ok(spec)
}

fn output(report: &RunReport, out: Option<PathBuf>) -> Result<()> {
    let stdout = io::stdout();
    emit_report(report, ReportFormat::Table, stdout.lock())?;
    if let Some(dir) = out {
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        let csv = dir.join(format!("{}.csv", report.method));
        write_csv(&report.records, fs::File::create(&csv)?)?;
        let mut summary = Vec::new();
        emit_report(report, ReportFormat::Table, &mut summary)?;
        fs::write(dir.join(format!("{}.txt", report.method)), summary)?;
        eprintln!("wrote {}", csv.display());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run { config, method, trials, seed, out } => {
            let spec = load(&config, seed)?;
            let trials = trials.unwrap_or(spec.trials);
            let scenario = build_scenario(&spec)?;
            let report = run_tracking(&scenario, method, &spec.filter, trials)?;
            output(&report, out)?;
        }
        Command::Fuse { config, stations, kappa, n_mci, trials, seed, out } => {
            let spec = load(&config, seed)?;
            if stations == 0 || stations > spec.stations.len() {
                bail!("--stations {stations} but the config defines {}", spec.stations.len());
            }
            let mut fusion = spec.fusion;
            if let Some(k) = kappa {
                fusion.kappa = k;
            }
            if let Some(n) = n_mci {
                fusion.n_mci = n;
            }
            let trials = trials.unwrap_or(spec.trials);
            let scenario = build_scenario(&spec)?;
            let report = run_multipoint(&scenario, stations, &spec.filter, &fusion, trials)?;
            output(&report, out)?;
        }
        Command::Selftest => {
            let mut all = true;
            let mut w = io::stdout().lock();
            for c in selftest::run_all() {
                all &= c.passed;
                writeln!(w, "{} {:<32} {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail)?;
            }
            return Ok(all);
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
            ExitCode::FAILURE
        }
    }
}
