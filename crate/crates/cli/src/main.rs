//! `insider-lab`: command-line front end for the insider-trading
//! log-utility toolkit.
//!
//! Exit codes: 0 on success, 1 for invalid arguments or parameters,
//! 2 for unreadable input, bad data and failed replays.

mod commands;
mod config;
mod manifest;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use insider_core::experiments::ExperimentError;
use insider_core::market_data::MarketDataError;
use insider_core::multiasset::MultiAssetError;
use insider_core::paths::PathError;
use insider_core::strategies::StrategyError;
use insider_core::valuation::ValuationError;
use insider_core::wealth::WealthError;

use commands::*;
use manifest::{sha256_file, RunManifest};

/// Environment variable naming the parent of default output directories.
const OUT_ENV: &str = "INSIDER_LAB_OUT";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Data(format!("{}: {e}", path.display()))
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
        }
    }
}

macro_rules! usage_error {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Usage(e.to_string())
            }
        }
    )*};
}
usage_error!(PathError, StrategyError, ValuationError, WealthError, ExperimentError);

impl From<MarketDataError> for CliError {
    fn from(e: MarketDataError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<MultiAssetError> for CliError {
    fn from(e: MultiAssetError) -> Self {
        CliError::Data(e.to_string())
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "insider-lab",
    version,
    about = "Log-utility portfolios for insiders and honest traders"
)]
#[command(args_override_self = true)]
struct Cli {
    /// Output directory. Defaults to $INSIDER_LAB_OUT/<command> or ./out/<command>.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// TOML file whose [<command>] table supplies default flags.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Clone)]
enum Command {
    /// Sample Brownian bridge paths ending at b.
    Bridge(BridgeArgs),
    /// Closed-form values of every strategy over a grid of signals b.
    ValueCurve(ValueCurveArgs),
    /// Distribution of forward and Skorokhod values over random signals.
    Histogram(HistogramArgs),
    /// Density-weighted values and their unconditional expectations.
    WeightedValue(WeightedValueArgs),
    /// Monte Carlo expected log utility of one strategy.
    Mc(McArgs),
    /// Trade the strategies on a price file.
    Backtest(BacktestArgs),
    /// Multi-asset optimal portfolios, with partial information via a mask.
    Mapo(MapoArgs),
    /// Re-run a manifest and check that every output hashes the same.
    Replay(ReplayArgs),
}

#[derive(clap::Args, Debug, Clone)]
struct ReplayArgs {
    /// manifest.json written by an earlier run.
    #[arg(long)]
    manifest: PathBuf,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Bridge(_) => "bridge",
            Command::ValueCurve(_) => "value-curve",
            Command::Histogram(_) => "histogram",
            Command::WeightedValue(_) => "weighted-value",
            Command::Mc(_) => "mc",
            Command::Backtest(_) => "backtest",
            Command::Mapo(_) => "mapo",
            Command::Replay(_) => "replay",
        }
    }

    fn params(&self) -> serde_json::Value {
        fn v<T: Serialize>(x: &T) -> serde_json::Value {
            serde_json::to_value(x).expect("arguments serialize")
        }
        match self {
            Command::Bridge(a) => v(a),
            Command::ValueCurve(a) => v(a),
            Command::Histogram(a) => v(a),
            Command::WeightedValue(a) => v(a),
            Command::Mc(a) => v(a),
            Command::Backtest(a) => v(a),
            Command::Mapo(a) => v(a),
            Command::Replay(_) => serde_json::Value::Null,
        }
    }

    fn from_manifest(m: &RunManifest) -> Result<Self, CliError> {
        fn p<T: serde::de::DeserializeOwned>(m: &RunManifest) -> Result<T, CliError> {
            serde_json::from_value(m.params.clone())
                .map_err(|e| CliError::Data(format!("manifest params for {}: {e}", m.command)))
        }
        Ok(match m.command.as_str() {
            "bridge" => Command::Bridge(p(m)?),
            "value-curve" => Command::ValueCurve(p(m)?),
            "histogram" => Command::Histogram(p(m)?),
            "weighted-value" => Command::WeightedValue(p(m)?),
            "mc" => Command::Mc(p(m)?),
            "backtest" => Command::Backtest(p(m)?),
            "mapo" => Command::Mapo(p(m)?),
            other => return Err(CliError::Data(format!("manifest names unknown command '{other}'"))),
        })
    }

    /// Input paths become absolute so a manifest replays from any directory.
    fn canonicalize_inputs(&mut self) -> Result<(), CliError> {
        let path = match self {
            Command::Backtest(a) => &mut a.csv,
            Command::Mapo(a) => &mut a.params_json,
            _ => return Ok(()),
        };
        *path = std::fs::canonicalize(&*path).map_err(|e| CliError::io(path, e))?;
        Ok(())
    }

    fn execute(&self, out: &Path) -> Result<Run, CliError> {
        match self {
            Command::Bridge(a) => bridge(a, out),
            Command::ValueCurve(a) => value_curve_cmd(a, out),
            Command::Histogram(a) => histogram(a, out),
            Command::WeightedValue(a) => weighted_value(a, out),
            Command::Mc(a) => mc(a, out),
            Command::Backtest(a) => backtest_cmd(a, out),
            Command::Mapo(a) => mapo(a, out),
            Command::Replay(_) => unreachable!("replay is dispatched separately"),
        }
    }
}

fn default_out(command: &str) -> PathBuf {
    match std::env::var_os(OUT_ENV) {
        Some(dir) if !dir.is_empty() => PathBuf::from(dir).join(command),
        _ => PathBuf::from("out").join(command),
    }
}

/// Runs a command and records its manifest.
fn run_command(command: &Command, out: &Path) -> Result<(Run, PathBuf), CliError> {
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let run = command.execute(out)?;
    let manifest = RunManifest::new(command.name(), run.seed, command.params()).write(out, &run.files)?;
    Ok((run, manifest))
}

fn replay(args: &ReplayArgs, out: Option<PathBuf>) -> Result<(), CliError> {
    let recorded = RunManifest::read(&args.manifest)?;
    let command = Command::from_manifest(&recorded)?;
    let out = out.unwrap_or_else(|| args.manifest.parent().unwrap_or(Path::new(".")).join("replay"));
    let (_, _) = run_command(&command, &out)?;
    let mut mismatches = Vec::new();
    for f in &recorded.outputs {
        let path = out.join(&f.path);
        let hash = if path.exists() {
            sha256_file(&path)?
        } else {
            "missing".to_string()
        };
        if hash != f.sha256 {
            mismatches.push(format!("{}: recorded {} replayed {hash}", f.path, f.sha256));
        }
    }
    if mismatches.is_empty() {
        println!(
            "replay of {} reproduced {} files in {}",
            recorded.command,
            recorded.outputs.len(),
            out.display()
        );
        Ok(())
    } else {
        Err(CliError::Data(format!(
            "replay differs:\n  {}",
            mismatches.join("\n  ")
        )))
    }
}

fn real_main(argv: Vec<OsString>) -> Result<(), CliError> {
    let argv = config::expand(argv)?;
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => Ok(()),
                _ => Err(CliError::Usage(String::new())),
            };
        }
    };
    let mut command = cli.command;
    if let Command::Replay(args) = &command {
        return replay(args, cli.out);
    }
    command.canonicalize_inputs()?;
    let out = cli.out.unwrap_or_else(|| default_out(command.name()));
    let (run, manifest) = run_command(&command, &out)?;
    // a closed pipe (e.g. `| head`) is not an error: the files are written
    let _ = writeln!(std::io::stdout(), "{}", run.stdout.trim_end());
    eprintln!("manifest: {}", manifest.display());
    Ok(())
}

fn main() -> ExitCode {
    match real_main(std::env::args_os().collect()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string();
            if !msg.is_empty() {
                eprintln!("error: {msg}");
            }
            ExitCode::from(e.exit_code())
        }
    }
}
