//! One function per subcommand. Each writes its files into `out` and
//! returns their names; `main` adds the manifest.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use insider_core::exec::Execution;
use insider_core::experiments::{
    value_distribution, weighted_value_curve, write_draws_csv, write_weighted_csv, DistributionConfig, Histogram,
    SampleStats,
};
use insider_core::market_data::{
    backtest, estimate_params, load_csv, ParamMode, RateSource, SigmaWindow, DEFAULT_STRATEGIES,
};
use insider_core::multiasset::{
    compare_values, mapo_partial_info, mapo_pi_bridge_or_forward, mapo_pi_skorokhod, mapo_value, numeric_maximize_j,
    MultiAssetParams, OracleConstraint, OracleSettings, Scheme,
};
use insider_core::paths::{bridge_from_brownian, sample_bridge_sequential, sample_brownian, BridgeSpec, TimeGrid};
use insider_core::rng::PathRng;
use insider_core::strategies::{Constraint, MarketParams, ParamCurves, StrategyKind, StrategySpec};
use insider_core::valuation::{
    unconditional_forward, unconditional_skorokhod, value_bb_or_forward_det, value_curve,
    value_forward_adapted_truncated, value_forward_noshort, value_honest_noshort, value_skorokhod,
    write_value_curve_csv, SignalDistribution,
};
use insider_core::wealth::{mc_expected_log_utility, mc_unconditional_log_utility, MCConfig};

use crate::manifest::SCHEMA_VERSION;
use crate::CliError;

/// Files written by a command and what to echo on stdout.
pub struct Run {
    pub files: Vec<String>,
    pub seed: Option<u64>,
    pub stdout: String,
}

fn create(out: &Path, name: &str) -> Result<BufWriter<File>, CliError> {
    let path = out.join(name);
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    Ok(BufWriter::new(File::create(&path).map_err(|e| CliError::io(&path, e))?))
}

fn write_with<F>(out: &Path, name: &str, f: F) -> Result<String, CliError>
where
    F: FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
{
    let mut w = create(out, name)?;
    f(&mut w).map_err(|e| CliError::io(&out.join(name), e))?;
    std::io::Write::flush(&mut w).map_err(|e| CliError::io(&out.join(name), e))?;
    Ok(name.to_string())
}

fn write_json<T: Serialize>(out: &Path, name: &str, value: &T) -> Result<(String, String), CliError> {
    let text = serde_json::to_string_pretty(value).expect("summary serializes") + "\n";
    let file = write_with(out, name, |w| std::io::Write::write_all(w, text.as_bytes()))?;
    Ok((file, text))
}

fn market(mu: f64, r: f64, sigma: f64, t: f64) -> Result<MarketParams, CliError> {
    Ok(MarketParams::new(mu, r, sigma, t)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sampler {
    /// Conditional Gaussian recursion.
    Sequential,
    /// `W_t - (t/T)(W_T - b)` from a Brownian path.
    Transform,
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
pub struct BridgeArgs {
    /// Terminal value of the bridge.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub b: f64,
    #[arg(long = "T", default_value_t = 1.0)]
    pub horizon: f64,
    #[arg(long, default_value_t = 64)]
    pub steps: usize,
    #[arg(long, default_value_t = 10)]
    pub paths: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = Sampler::Sequential)]
    pub sampler: Sampler,
}

pub fn bridge(a: &BridgeArgs, out: &Path) -> Result<Run, CliError> {
    let spec = BridgeSpec::new(a.b, a.horizon)?;
    let grid = TimeGrid::new(a.horizon, a.steps)?;
    if a.paths == 0 {
        return Err(CliError::Usage("--paths must be at least 1".into()));
    }
    let mut files = Vec::with_capacity(a.paths);
    for i in 0..a.paths {
        let mut rng = PathRng::new(a.seed, i as u64);
        let path = match a.sampler {
            Sampler::Sequential => sample_bridge_sequential(&spec, grid, &mut rng)?,
            Sampler::Transform => bridge_from_brownian(&sample_brownian(grid, &mut rng), &spec)?,
        };
        files.push(write_with(out, &format!("path_{i:04}.csv"), |w| path.write_csv(w))?);
    }
    Ok(Run {
        stdout: format!("wrote {} bridge paths ending at {} to {}", a.paths, a.b, out.display()),
        files,
        seed: Some(a.seed),
    })
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
pub struct ValueCurveArgs {
    #[arg(long, default_value_t = 0.03, allow_negative_numbers = true)]
    pub mu: f64,
    #[arg(long, default_value_t = 0.02, allow_negative_numbers = true)]
    pub r: f64,
    #[arg(long, default_value_t = 0.3)]
    pub sigma: f64,
    #[arg(long = "T", default_value_t = 1.0)]
    pub horizon: f64,
    /// Defaults to -theta T.
    #[arg(long, allow_negative_numbers = true)]
    pub bmin: Option<f64>,
    /// Defaults to -theta T + sigma T.
    #[arg(long, allow_negative_numbers = true)]
    pub bmax: Option<f64>,
    /// Number of grid points (a single point when bmin = bmax is not allowed).
    #[arg(long, default_value_t = 101)]
    pub n: usize,
}

pub fn value_curve_cmd(a: &ValueCurveArgs, out: &Path) -> Result<Run, CliError> {
    let p = market(a.mu, a.r, a.sigma, a.horizon)?;
    let lower = -p.theta() * p.horizon;
    let bmin = a.bmin.unwrap_or(lower);
    let bmax = a.bmax.unwrap_or(lower + p.sigma * p.horizon);
    if !(bmin.is_finite() && bmax.is_finite()) {
        return Err(CliError::Usage("pass --bmin and --bmax when sigma = 0".into()));
    }
    if bmin >= bmax {
        return Err(CliError::Usage(format!(
            "--bmin ({bmin}) must be below --bmax ({bmax})"
        )));
    }
    if a.n < 2 {
        return Err(CliError::Usage("--n must be at least 2".into()));
    }
    let grid: Vec<f64> = (0..a.n)
        .map(|k| {
            if k + 1 == a.n {
                bmax
            } else {
                bmin + (bmax - bmin) * k as f64 / (a.n - 1) as f64
            }
        })
        .collect();
    let rows = value_curve(&p, &grid)?;
    let file = write_with(out, "value_curve.csv", |w| write_value_curve_csv(&rows, w))?;
    Ok(Run {
        stdout: format!(
            "wrote {} rows over b in [{bmin}, {bmax}] to {}",
            rows.len(),
            out.join(&file).display()
        ),
        files: vec![file],
        seed: None,
    })
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
pub struct HistogramArgs {
    /// Mean of the signal.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub e: f64,
    /// Variance of the signal.
    #[arg(long, default_value_t = 64.0, allow_negative_numbers = true)]
    pub var: f64,
    #[arg(long, default_value_t = 5000)]
    pub draws: usize,
    #[arg(long, default_value_t = 0.03, allow_negative_numbers = true)]
    pub mu: f64,
    /// Risk-free rate per unit time.
    #[arg(long, alias = "rf", default_value_t = 0.0027, allow_negative_numbers = true)]
    pub r: f64,
    #[arg(long, default_value_t = 0.3)]
    pub sigma: f64,
    #[arg(long = "T", default_value_t = 64.0)]
    pub horizon: f64,
    /// Steps of each realized path.
    #[arg(long, default_value_t = 64)]
    pub steps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 40)]
    pub bins: usize,
    /// Initial stock price.
    #[arg(long, default_value_t = 100.0)]
    pub s0: f64,
}

#[derive(Serialize)]
struct HistogramSummary {
    schema_version: u32,
    e: f64,
    var: f64,
    draws: usize,
    forward: SampleStats,
    skorokhod: SampleStats,
    backtest_forward: SampleStats,
    backtest_skorokhod: SampleStats,
    skorokhod_mean_above_forward: bool,
    skorokhod_variance_below_forward: bool,
}

pub fn histogram(a: &HistogramArgs, out: &Path) -> Result<Run, CliError> {
    let cfg = DistributionConfig {
        params: market(a.mu, a.r, a.sigma, a.horizon)?,
        signal: SignalDistribution::new(a.e, a.var)?,
        draws: a.draws,
        seed: a.seed,
        steps: a.steps,
        s0: a.s0,
    };
    let res = value_distribution(&cfg, Execution::Auto)?;
    let fw: Vec<f64> = res.draws.iter().map(|d| d.forward).collect();
    let sk: Vec<f64> = res.draws.iter().map(|d| d.skorokhod).collect();
    let lo = fw.iter().chain(&sk).copied().fold(f64::INFINITY, f64::min);
    let hi = fw.iter().chain(&sk).copied().fold(f64::NEG_INFINITY, f64::max);
    let h_fw = Histogram::with_range(&fw, lo, hi, a.bins)?;
    let h_sk = Histogram::with_range(&sk, lo, hi, a.bins)?;
    let mut files = vec![
        write_with(out, "draws.csv", |w| write_draws_csv(&res.draws, w))?,
        write_with(out, "histogram_forward.csv", |w| h_fw.write_csv(w))?,
        write_with(out, "histogram_skorokhod.csv", |w| h_sk.write_csv(w))?,
    ];
    let summary = HistogramSummary {
        schema_version: SCHEMA_VERSION,
        e: a.e,
        var: a.var,
        draws: a.draws,
        forward: res.forward,
        skorokhod: res.skorokhod,
        backtest_forward: res.backtest_forward,
        backtest_skorokhod: res.backtest_skorokhod,
        skorokhod_mean_above_forward: res.skorokhod.mean > res.forward.mean,
        skorokhod_variance_below_forward: res.skorokhod.variance < res.forward.variance,
    };
    let (file, text) = write_json(out, "summary.json", &summary)?;
    files.push(file);
    Ok(Run {
        files,
        seed: Some(a.seed),
        stdout: text,
    })
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
pub struct WeightedValueArgs {
    #[arg(long, default_value_t = 0.03, allow_negative_numbers = true)]
    pub mu: f64,
    #[arg(long, default_value_t = 0.02, allow_negative_numbers = true)]
    pub r: f64,
    #[arg(long, default_value_t = 0.3)]
    pub sigma: f64,
    #[arg(long = "T", default_value_t = 1.0)]
    pub horizon: f64,
    /// Mean of the signal.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub mean: f64,
    /// Variance of the signal.
    #[arg(long, default_value_t = 1.0)]
    pub var: f64,
    #[arg(long, default_value_t = 201)]
    pub n: usize,
}

pub fn weighted_value(a: &WeightedValueArgs, out: &Path) -> Result<Run, CliError> {
    let p = market(a.mu, a.r, a.sigma, a.horizon)?;
    let d = SignalDistribution::new(a.mean, a.var)?;
    let w = weighted_value_curve(&p, &d, a.n)?;
    let csv = write_with(out, "weighted_value.csv", |f| write_weighted_csv(&w.rows, f))?;
    #[derive(Serialize)]
    struct Summary {
        schema_version: u32,
        forward_closed_form: f64,
        forward_quadrature: f64,
        forward_printed_expression: f64,
        skorokhod_closed_form: f64,
        skorokhod_quadrature: f64,
    }
    let (json, text) = write_json(
        out,
        "summary.json",
        &Summary {
            schema_version: SCHEMA_VERSION,
            forward_closed_form: w.forward_closed_form,
            forward_quadrature: w.forward_quadrature,
            forward_printed_expression: w.forward_printed,
            skorokhod_closed_form: w.skorokhod_closed_form,
            skorokhod_quadrature: w.skorokhod_quadrature,
        },
    )?;
    Ok(Run {
        files: vec![csv, json],
        seed: None,
        stdout: text,
    })
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
pub struct McArgs {
    /// honest, bridge, forward-det, forward-adapted or skorokhod.
    #[arg(long, default_value = "honest")]
    pub strategy: String,
    #[arg(long, default_value_t = 0.03, allow_negative_numbers = true)]
    pub mu: f64,
    #[arg(long, default_value_t = 0.02, allow_negative_numbers = true)]
    pub r: f64,
    #[arg(long, default_value_t = 0.3)]
    pub sigma: f64,
    #[arg(long = "T", default_value_t = 1.0)]
    pub horizon: f64,
    /// Terminal value of the driving Brownian motion known to the insider.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub b: f64,
    #[arg(long, default_value_t = 256)]
    pub steps: usize,
    #[arg(long, default_value_t = 10_000)]
    pub paths: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Allow portfolios outside [0, 1].
    #[arg(long)]
    pub allow_short: bool,
    /// Stop trading at T - eps.
    #[arg(long)]
    pub eps: Option<f64>,
    /// Draw b = W_T per path instead of fixing it.
    #[arg(long)]
    pub unconditional: bool,
}

#[derive(Serialize)]
struct McReport {
    schema_version: u32,
    strategy: String,
    constraint: Constraint,
    b: Option<f64>,
    n_paths: usize,
    steps: usize,
    seed: u64,
    trading_horizon: f64,
    mean: f64,
    std_error: f64,
    closed_form: Option<f64>,
    z_score: Option<f64>,
}

fn mc_closed_form(
    a: &McArgs,
    kind: StrategyKind,
    constraint: Constraint,
    p: &MarketParams,
) -> Result<Option<f64>, CliError> {
    let no_short = constraint == Constraint::NoShort;
    if a.unconditional {
        let d = SignalDistribution::new(0.0, p.horizon)?;
        return Ok(match (kind, no_short, a.eps) {
            (StrategyKind::Honest, true, None) => Some(value_honest_noshort(p)?.total),
            (StrategyKind::ForwardDeterministic | StrategyKind::BridgeInsider, true, None) if p.sigma > 0.0 => {
                Some(unconditional_forward(p, &d)?)
            }
            (StrategyKind::SkorokhodInsider, _, None) => Some(unconditional_skorokhod(p, &d)?),
            _ => None,
        });
    }
    let curves = || ParamCurves::constant(p, 1);
    Ok(match (kind, no_short, a.eps) {
        (StrategyKind::Honest, true, None) => Some(value_honest_noshort(p)?.total),
        (StrategyKind::Honest, false, None) if p.sigma > 0.0 => {
            Some(p.r * p.horizon + 0.5 * p.theta().powi(2) * p.horizon)
        }
        (StrategyKind::ForwardDeterministic | StrategyKind::BridgeInsider, true, None) => {
            Some(value_forward_noshort(p, a.b)?.total)
        }
        (StrategyKind::ForwardDeterministic | StrategyKind::BridgeInsider, false, None) if p.sigma > 0.0 => {
            Some(value_bb_or_forward_det(&curves()?, a.b))
        }
        (StrategyKind::ForwardAdapted, false, Some(eps)) => Some(value_forward_adapted_truncated(p, a.b, eps)?),
        (StrategyKind::SkorokhodInsider, _, None) => Some(value_skorokhod(p, a.b)?.total),
        _ => None,
    })
}

pub fn mc(a: &McArgs, out: &Path) -> Result<Run, CliError> {
    let p = market(a.mu, a.r, a.sigma, a.horizon)?;
    let kind: StrategyKind = a.strategy.parse()?;
    let constraint = if a.allow_short {
        Constraint::AllowShort
    } else {
        Constraint::NoShort
    };
    let spec = StrategySpec::new(kind, constraint)?;
    let trading = match a.eps {
        None => p.horizon,
        Some(eps) if eps > 0.0 && eps < p.horizon => p.horizon - eps,
        Some(eps) => return Err(CliError::Usage(format!("--eps must lie in (0, T), got {eps}"))),
    };
    if kind == StrategyKind::ForwardAdapted && a.eps.is_none() {
        return Err(CliError::Usage(
            "forward-adapted portfolios blow up at T; pass --eps to stop trading at T - eps".into(),
        ));
    }
    let cfg = MCConfig {
        n_paths: a.paths,
        master_seed: a.seed,
        grid: TimeGrid::new(trading, a.steps)?,
    };
    let est = if a.unconditional {
        mc_unconditional_log_utility(&spec, &p, &cfg, Execution::Auto)?
    } else {
        mc_expected_log_utility(&spec, &p, a.b, &cfg, Execution::Auto)?
    };
    let closed_form = mc_closed_form(a, kind, constraint, &p)?;
    let report = McReport {
        schema_version: SCHEMA_VERSION,
        strategy: kind.name().to_string(),
        constraint,
        b: (!a.unconditional).then_some(a.b),
        n_paths: est.n_paths,
        steps: a.steps,
        seed: a.seed,
        trading_horizon: trading,
        mean: est.mean,
        std_error: est.std_error,
        closed_form,
        z_score: closed_form
            .filter(|_| est.std_error > 0.0)
            .map(|cf| (est.mean - cf) / est.std_error),
    };
    let (file, text) = write_json(out, "summary.json", &report)?;
    Ok(Run {
        files: vec![file],
        seed: Some(a.seed),
        stdout: text,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SigmaWindowArg {
    PerStep,
    Monthly,
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
pub struct BacktestArgs {
    /// Price file with `date,price[,rate]` rows.
    #[arg(long)]
    pub csv: PathBuf,
    /// Steps to trade; defaults to the whole series.
    #[arg(long)]
    pub horizon: Option<usize>,
    #[arg(long, value_enum, default_value_t = SigmaWindowArg::PerStep)]
    pub sigma_window: SigmaWindowArg,
    /// Constant per-step risk-free rate. Without it the file's rate column is used.
    #[arg(long, allow_negative_numbers = true)]
    pub rate: Option<f64>,
    /// Converts the annual rate column to per-step rates.
    #[arg(long, default_value_t = 252.0)]
    pub periods_per_year: f64,
    /// Re-estimate mu and sigma from this many trailing returns before each step.
    #[arg(long)]
    pub rolling_window: Option<usize>,
    /// Strategies to run (repeatable).
    #[arg(long = "strategy")]
    pub strategies: Vec<String>,
}

pub fn backtest_cmd(a: &BacktestArgs, out: &Path) -> Result<Run, CliError> {
    let series = load_csv(&a.csv)?;
    let horizon = a.horizon.unwrap_or(series.len().saturating_sub(1));
    let rate = match (a.rate, series.rates().is_some()) {
        (Some(r), _) => RateSource::Constant(r),
        (None, true) => RateSource::Column {
            periods_per_year: a.periods_per_year,
        },
        (None, false) => return Err(CliError::Usage("the file has no rate column; pass --rate".into())),
    };
    let window = match a.sigma_window {
        SigmaWindowArg::PerStep => SigmaWindow::PerStep,
        SigmaWindowArg::Monthly => SigmaWindow::Monthly,
    };
    let est = estimate_params(&series, rate, horizon, window)?;
    let kinds: Vec<StrategyKind> = if a.strategies.is_empty() {
        DEFAULT_STRATEGIES.to_vec()
    } else {
        a.strategies.iter().map(|s| s.parse()).collect::<Result<_, _>>()?
    };
    let mode = match a.rolling_window {
        Some(window) => ParamMode::Rolling { window },
        None => ParamMode::Fixed,
    };
    let res = backtest(&series, &est, &kinds, mode)?;
    let mut files = Vec::new();
    for (i, st) in res.strategies.iter().enumerate() {
        files.push(write_with(out, &format!("wealth_{}.csv", st.kind.name()), |w| {
            res.write_strategy_csv(i, w)
        })?);
    }
    let (file, text) = write_json(out, "summary.json", &res.summary())?;
    files.push(file);
    Ok(Run {
        files,
        seed: None,
        stdout: text,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeArg {
    BridgeForward,
    Skorokhod,
    Both,
}

#[derive(Args, Clone, Debug, Serialize, Deserialize)]
pub struct MapoArgs {
    /// JSON file `{"mu":[..],"r":..,"sigma":[[..]],"T":..,"b":[..],"mask":[..]}`.
    #[arg(long)]
    pub params_json: PathBuf,
    #[arg(long, value_enum, default_value_t = SchemeArg::Both)]
    pub scheme: SchemeArg,
    /// Residual tolerance of the numeric cross-check.
    #[arg(long, default_value_t = 1e-10)]
    pub tolerance: f64,
}

#[derive(Serialize)]
struct SchemeReport {
    pi: Vec<f64>,
    violates_no_short: bool,
    value: f64,
    /// Numeric maximizer of the same objective (unconstrained for
    /// bridge/forward, [0,1]^d for Skorokhod).
    oracle_pi: Option<Vec<f64>>,
    oracle_max_abs_diff: Option<f64>,
    partial_info: Option<insider_core::multiasset::PartialInfoSolution>,
}

#[derive(Serialize)]
struct MapoReport {
    schema_version: u32,
    dim: usize,
    condition_number: f64,
    mask: Vec<bool>,
    bridge_forward: Option<SchemeReport>,
    skorokhod: Option<SchemeReport>,
    comparison: Option<insider_core::multiasset::ValueComparison>,
}

pub fn mapo(a: &MapoArgs, out: &Path) -> Result<Run, CliError> {
    let text = std::fs::read_to_string(&a.params_json).map_err(|e| CliError::io(&a.params_json, e))?;
    let m = MultiAssetParams::from_json(&text)?;
    let settings = OracleSettings {
        tolerance: a.tolerance,
        ..OracleSettings::default()
    };
    let partial = m.mask().iter().any(|k| !k);
    let scheme_report = |scheme: Scheme| -> Result<SchemeReport, CliError> {
        let (pv, constraint) = match scheme {
            Scheme::BridgeOrForward => (mapo_pi_bridge_or_forward(&m)?, OracleConstraint::Unconstrained),
            Scheme::Skorokhod => (mapo_pi_skorokhod(&m), OracleConstraint::Box),
        };
        let oracle = numeric_maximize_j(&m, scheme, false, constraint, settings).ok();
        let diff = oracle
            .as_ref()
            .map(|o| o.pi.iter().zip(&pv.pi).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max));
        Ok(SchemeReport {
            value: mapo_value(&m, scheme)?,
            violates_no_short: pv.violates_no_short,
            pi: pv.pi,
            oracle_pi: oracle.map(|o| o.pi),
            oracle_max_abs_diff: diff,
            partial_info: if partial {
                Some(mapo_partial_info(&m, scheme)?)
            } else {
                None
            },
        })
    };
    let want_bf = a.scheme != SchemeArg::Skorokhod;
    let want_sk = a.scheme != SchemeArg::BridgeForward;
    let report = MapoReport {
        schema_version: SCHEMA_VERSION,
        dim: m.dim(),
        condition_number: m.condition(),
        mask: m.mask().to_vec(),
        bridge_forward: if want_bf {
            Some(scheme_report(Scheme::BridgeOrForward)?)
        } else {
            None
        },
        skorokhod: if want_sk {
            Some(scheme_report(Scheme::Skorokhod)?)
        } else {
            None
        },
        comparison: if want_bf && want_sk {
            Some(compare_values(&m)?)
        } else {
            None
        },
    };
    let (file, text) = write_json(out, "summary.json", &report)?;
    Ok(Run {
        files: vec![file],
        seed: None,
        stdout: text,
    })
}
