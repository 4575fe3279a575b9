//! Experiment runner behind the `muonlab` binary.
//!
//! Every command resolves its config, computes all outputs in memory and only
//! then writes them, together with a `manifest.json` of checksums.

mod commands;
mod config;
mod error;
mod output;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};

pub use commands::{BudgetCurvesConfig, ImplicitBiasConfig, NsScanConfig};
pub use error::CliError;

use commands::Report;
use config::{resolve, sha256_hex};
use error::CliResult;
use output::write_outputs;

#[derive(Debug, Parser)]
#[command(name = "muonlab", version, about = "Implicit-bias, budget and optimizer-mismatch experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct ConfigArgs {
    /// JSON config file; missing fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config leaf, e.g. `--set steps=100` or `--set lora.rank=2`.
    #[arg(long = "set", value_name = "PATH=VALUE")]
    sets: Vec<String>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SeedArgs {
    /// Comma-separated seed list; overrides the config.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Both,
    FullOnly,
    LoraOnly,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// SignGD / Muon on random underdetermined regressions versus their closed-form limits.
    ImplicitBias {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[command(flatten)]
        seeds: SeedArgs,
    },
    /// Budgeted fine-tuning errors, closed form beside an iterative oracle, plus thresholds.
    BudgetCurves {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[command(flatten)]
        seeds: SeedArgs,
    },
    /// Scalar Newton-Schulz map over a grid and its envelope.
    NsScan {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Coefficient table `{"steps": [[a, b, c], ...]}`.
        #[arg(long)]
        schedule: Option<PathBuf>,
    },
    /// Pretrain / fine-tune mismatch grid on a tiny MLP.
    Microtrain {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[command(flatten)]
        seeds: SeedArgs,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
    },
    /// Spectral report of a weight file `{"m", "n", "entries"}`.
    Spectra {
        #[arg(long)]
        weights: PathBuf,
        /// Output directory; prints to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return e.exit_code();
    }
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn configure_threads() -> CliResult<()> {
    let Ok(raw) = std::env::var("MUONLAB_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("MUONLAB_THREADS must be a positive integer, got {raw:?}")))?;
    // A pool may already exist when embedded; the cap then stays as it was.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    Ok(())
}

fn dispatch(command: Command) -> CliResult<()> {
    match command {
        Command::ImplicitBias { cfg, seeds } => {
            run_configured("implicit-bias", &cfg, seed_flags(&seeds), commands::implicit_bias)
        }
        Command::BudgetCurves { cfg, seeds } => {
            run_configured("budget-curves", &cfg, seed_flags(&seeds), commands::budget_curves)
        }
        Command::NsScan { cfg, schedule } => {
            let flags = schedule
                .map(|p| vec![("schedule_file", json!(p))])
                .unwrap_or_default();
            run_configured("ns-scan", &cfg, flags, commands::ns_scan_cmd)
        }
        Command::Microtrain { cfg, seeds, mode } => {
            let mut flags = seed_flags(&seeds);
            if let Some(mode) = mode {
                let modes = match mode {
                    ModeArg::Both => json!(["full", "lora"]),
                    ModeArg::FullOnly => json!(["full"]),
                    ModeArg::LoraOnly => json!(["lora"]),
                };
                flags.push(("modes", modes));
            }
            run_configured("microtrain", &cfg, flags, commands::microtrain)
        }
        Command::Spectra { weights, out } => run_spectra(&weights, out.as_deref()),
    }
}

fn seed_flags(seeds: &SeedArgs) -> Vec<(&'static str, Value)> {
    seeds
        .seeds
        .as_ref()
        .map(|s| vec![("seeds", json!(s))])
        .unwrap_or_default()
}

fn run_configured<T>(
    name: &str,
    args: &ConfigArgs,
    flags: Vec<(&str, Value)>,
    command: impl FnOnce(&T) -> CliResult<Report>,
) -> CliResult<()>
where
    T: Serialize + DeserializeOwned + Default,
{
    let resolved = resolve::<T>(args.config.as_deref(), &args.sets, flags)?;
    let report = command(&resolved.config)?;
    let count = report.outputs.len();
    write_outputs(&args.out, name, resolved.digest, resolved.value, report.seeds, report.outputs)?;
    eprintln!("{name}: wrote {count} files to {}", args.out.display());
    match report.not_converged {
        Some(msg) => Err(CliError::NotConverged(msg)),
        None => Ok(()),
    }
}

fn run_spectra(weights: &Path, out: Option<&Path>) -> CliResult<()> {
    let bytes = std::fs::read(weights)
        .map_err(|e| CliError::Usage(format!("cannot read weights {}: {e}", weights.display())))?;
    let matrix: muonlab::Matrix = serde_json::from_slice(&bytes)
        .map_err(|e| CliError::Usage(format!("malformed weight file {}: {e}", weights.display())))?;
    let file = commands::spectra(&matrix)?;
    match out {
        None => {
            println!("{}", serde_json::to_string_pretty(&file).map_err(muonlab::Error::from)?);
            Ok(())
        }
        Some(dir) => {
            let mut outputs = output::Outputs::default();
            outputs.add_json("spectra.json", &file)?;
            write_outputs(dir, "spectra", sha256_hex(&bytes), json!({"weights_sha256": sha256_hex(&bytes)}), Vec::new(), outputs)?;
            Ok(())
        }
    }
}
