use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use onebit_core::harness::{parse_list, run_crb_sweep, run_mse_sweep, run_ser_sweep, SystemConfig};
use onebit_core::records::{emit, write_records, CurveRecord, Format};
use onebit_core::{selftest, Error, Result};

/// Channel estimation and detection with one-bit oversampled receivers.
#[derive(Parser)]
#[command(name = "onebit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Normalized MSE of the estimators (and the bound unless disabled).
    MseSweep(SweepArgs),
    /// Symbol error rate with perfect and estimated channels.
    SerSweep(SweepArgs),
    /// Bayesian Cramér-Rao bound only.
    CrbSweep(SweepArgs),
    /// Quick numerical checks.
    Selftest,
}

#[derive(Args)]
struct SweepArgs {
    /// Flat `key = value` scenario file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Monte Carlo trials per point.
    #[arg(long)]
    trials: Option<usize>,
    /// SNR grid in dB, comma separated.
    #[arg(long)]
    snr: Option<String>,
    /// Oversampling factors, comma separated.
    #[arg(long)]
    m: Option<String>,
    /// Receive correlation coefficient.
    #[arg(long)]
    rho: Option<f64>,
    /// Pilot length.
    #[arg(long)]
    tau: Option<usize>,
    /// Sweep axis: snr or tau.
    #[arg(long)]
    sweep: Option<String>,
    /// Pilot lengths for a tau sweep, comma separated.
    #[arg(long)]
    tau_grid: Option<String>,
    /// Channel draws per bound point.
    #[arg(long)]
    bound_draws: Option<usize>,
    /// Detected symbols per SER point.
    #[arg(long)]
    ser_symbols: Option<usize>,
    /// Skip the bound in mse-sweep.
    #[arg(long)]
    no_bounds: bool,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "csv")]
    format: Format,
    /// Worker threads, 0 for all cores.
    #[arg(long)]
    workers: Option<usize>,
}

impl SweepArgs {
    fn config(&self) -> Result<SystemConfig> {
        let mut cfg = match &self.config {
            Some(p) => SystemConfig::load(p)?,
            None => SystemConfig::default(),
        };
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.trials {
            cfg.trials = v;
        }
        if let Some(v) = &self.snr {
            cfg.snr_grid_db = parse_list("snr", v)?;
        }
        if let Some(v) = &self.m {
            cfg.oversampling = parse_list("m", v)?;
        }
        if let Some(v) = self.rho {
            cfg.rho = v;
        }
        if let Some(v) = self.tau {
            cfg.tau = v;
        }
        if let Some(v) = &self.sweep {
            cfg.sweep = v.parse()?;
        }
        if let Some(v) = &self.tau_grid {
            cfg.tau_grid = parse_list("tau-grid", v)?;
        }
        if let Some(v) = self.bound_draws {
            cfg.channel_draws_for_bounds = v;
        }
        if let Some(v) = self.ser_symbols {
            cfg.ser_symbols = v;
        }
        if self.no_bounds {
            cfg.bounds = false;
        }
        if let Some(v) = self.workers {
            cfg.workers = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn output(records: &[CurveRecord], args: &SweepArgs) -> Result<()> {
    if let Some(bad) = records
        .iter()
        .find(|r| !r.value.is_finite() || !r.ci_half_width.is_finite())
    {
        return Err(Error::Numerical(format!(
            "non-finite {} for M={} at {}={}",
            bad.estimator_or_bound, bad.m, bad.sweep_name, bad.sweep_value
        )));
    }
    match &args.out {
        Some(path) => emit(records, path, args.format),
        None => write_records(records, std::io::stdout().lock(), args.format, Path::new("<stdout>")),
    }
}

fn sweep(args: &SweepArgs, run: fn(&SystemConfig) -> Result<Vec<CurveRecord>>) -> Result<()> {
    let cfg = args.config()?;
    let records = run(&cfg)?;
    output(&records, args)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::MseSweep(a) => sweep(a, run_mse_sweep),
        Command::SerSweep(a) => sweep(a, run_ser_sweep),
        Command::CrbSweep(a) => sweep(a, run_crb_sweep),
        Command::Selftest => {
            let checks = selftest::run_all();
            for c in &checks {
                let tag = if c.passed { "PASS" } else { "FAIL" };
                println!("{tag} {}  {}", c.name, c.detail);
            }
            let failed = checks.iter().filter(|c| !c.passed).count();
            if failed == 0 {
                Ok(())
            } else {
                Err(Error::Numerical(format!("{failed} self-check(s) failed")))
            }
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
