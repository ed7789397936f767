//! Price-series ingestion, parameter estimation and the daily three-strategy
//! backtest.
//!
//! Everything is in per-step units: returns, drift, volatility and the
//! risk-free rate are per trading step and the horizon is a step count.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::compensated_sum;
use crate::format::fmt_sig;
use crate::strategies::{MarketParams, StrategyError, StrategyKind, StrategySpec};
use crate::wealth::{implied_b, skorokhod_terminal_wealth, WealthError};

/// Steps per "month" for `SigmaWindow::Monthly`.
pub const MONTH_STEPS: usize = 21;
/// Trading days per year used to convert an annual rate column.
pub const DEFAULT_PERIODS_PER_YEAR: f64 = 252.0;
pub const SUMMARY_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum MarketDataError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("no records")]
    NoRecords,
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("line {line}: date {date} is not after the previous date {previous}")]
    NonMonotoneDate {
        line: u64,
        date: NaiveDate,
        previous: NaiveDate,
    },
    #[error("line {line}: price must be positive, got {value}")]
    NonPositivePrice { line: u64, value: f64 },
    #[error("line {line}: rate column present on earlier rows but missing here")]
    MissingRate { line: u64 },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("horizon of {horizon} steps exceeds the {available} steps in the series")]
    HorizonTooLong { horizon: usize, available: usize },
    #[error(transparent)]
    Strategy(#[from] StrategyError),
    #[error(transparent)]
    Wealth(#[from] WealthError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct PriceSeries {
    dates: Vec<NaiveDate>,
    prices: Vec<f64>,
    /// Annualized decimal short rates, one per record, when the file has them.
    rates: Option<Vec<f64>>,
}

impl PriceSeries {
    pub fn new(dates: Vec<NaiveDate>, prices: Vec<f64>, rates: Option<Vec<f64>>) -> Result<Self, MarketDataError> {
        if dates.is_empty() {
            return Err(MarketDataError::NoRecords);
        }
        if dates.len() != prices.len() || rates.as_ref().is_some_and(|r| r.len() != prices.len()) {
            return Err(MarketDataError::InsufficientData("column lengths differ".into()));
        }
        for (k, &value) in prices.iter().enumerate() {
            if !(value.is_finite() && value > 0.0) {
                return Err(MarketDataError::NonPositivePrice {
                    line: k as u64 + 1,
                    value,
                });
            }
        }
        for k in 1..dates.len() {
            if dates[k] <= dates[k - 1] {
                return Err(MarketDataError::NonMonotoneDate {
                    line: k as u64 + 1,
                    date: dates[k],
                    previous: dates[k - 1],
                });
            }
        }
        Ok(Self { dates, prices, rates })
    }

    pub fn len(&self) -> usize {
        self.prices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prices.is_empty()
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn prices(&self) -> &[f64] {
        &self.prices
    }

    pub fn rates(&self) -> Option<&[f64]> {
        self.rates.as_deref()
    }

    /// Per-step log returns `ln(S_k / S_{k-1})`.
    pub fn log_returns(&self) -> Vec<f64> {
        self.prices.windows(2).map(|w| (w[1] / w[0]).ln()).collect()
    }

    /// Same series with every price multiplied by `c`.
    pub fn rescaled(&self, c: f64) -> Result<Self, MarketDataError> {
        Self::new(
            self.dates.clone(),
            self.prices.iter().map(|p| p * c).collect(),
            self.rates.clone(),
        )
    }
}

/// Reads `date,price[,rate]` rows. A header row is optional; dates are
/// `YYYY-MM-DD`. Errors carry 1-based file line numbers.
pub fn parse_csv<R: Read>(reader: R) -> Result<PriceSeries, MarketDataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let mut dates = Vec::new();
    let mut prices = Vec::new();
    let mut rates: Vec<Option<f64>> = Vec::new();
    let mut lines = Vec::new();
    for (idx, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| MarketDataError::Parse {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(idx as u64 + 1, |p| p.line());
        if record.iter().all(str::is_empty) {
            continue;
        }
        let first = record.get(0).unwrap_or_default();
        if idx == 0 && first.eq_ignore_ascii_case("date") {
            continue;
        }
        if record.len() < 2 || record.len() > 3 {
            return Err(MarketDataError::Parse {
                line,
                message: format!("expected date,price[,rate], got {} fields", record.len()),
            });
        }
        let date = NaiveDate::parse_from_str(first, "%Y-%m-%d").map_err(|e| MarketDataError::Parse {
            line,
            message: format!("bad date {first:?}: {e}"),
        })?;
        let number = |field: &str, what: &str| {
            field.parse::<f64>().map_err(|_| MarketDataError::Parse {
                line,
                message: format!("bad {what} {field:?}"),
            })
        };
        let price = number(&record[1], "price")?;
        if !(price.is_finite() && price > 0.0) {
            return Err(MarketDataError::NonPositivePrice { line, value: price });
        }
        if let Some(&previous) = dates.last() {
            if date <= previous {
                return Err(MarketDataError::NonMonotoneDate { line, date, previous });
            }
        }
        let rate = match record.get(2) {
            Some(f) if !f.is_empty() => Some(number(f, "rate")?),
            _ => None,
        };
        dates.push(date);
        prices.push(price);
        rates.push(rate);
        lines.push(line);
    }
    if prices.is_empty() {
        return Err(MarketDataError::NoRecords);
    }
    let rates = if rates.iter().any(Option::is_some) {
        let mut out = Vec::with_capacity(rates.len());
        for (rate, line) in rates.into_iter().zip(lines) {
            out.push(rate.ok_or(MarketDataError::MissingRate { line })?);
        }
        Some(out)
    } else {
        None
    };
    PriceSeries::new(dates, prices, rates)
}

pub fn load_csv(path: &Path) -> Result<PriceSeries, MarketDataError> {
    let file = std::fs::File::open(path).map_err(|e| MarketDataError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_csv(std::io::BufReader::new(file))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SigmaWindow {
    /// Sample std of per-step log returns.
    #[default]
    PerStep,
    /// Sample std of non-overlapping `MONTH_STEPS`-step log returns, not rescaled.
    Monthly,
}

/// Where the risk-free rate comes from.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RateSource {
    /// Per-step rate.
    Constant(f64),
    /// Average of the series' rate column, annualized decimals divided by
    /// the given periods per year.
    Column { periods_per_year: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatedParams {
    pub params: MarketParams,
    /// Number of log returns used for `mu`.
    pub sample_size: usize,
    pub sigma_window: SigmaWindow,
    pub horizon_steps: usize,
}

/// Sample mean and sample standard deviation (n - 1).
pub fn mean_and_std(x: &[f64]) -> Result<(f64, f64), MarketDataError> {
    if x.len() < 2 {
        return Err(MarketDataError::InsufficientData(format!(
            "need at least 2 returns, have {}",
            x.len()
        )));
    }
    let n = x.len() as f64;
    let mean = compensated_sum(x.iter().copied()) / n;
    let ss = compensated_sum(x.iter().map(|v| (v - mean) * (v - mean)));
    Ok((mean, (ss / (n - 1.0)).sqrt()))
}

/// Estimates per-step `mu` (mean log return), `sigma` and `r`; `T` is
/// `horizon_steps`.
///
/// `sigma` uses the sample standard deviation; a single log return is
/// accepted (two prices), in which case `sigma = 0`.
pub fn estimate_params(
    s: &PriceSeries,
    rate: RateSource,
    horizon_steps: usize,
    window: SigmaWindow,
) -> Result<EstimatedParams, MarketDataError> {
    let returns = s.log_returns();
    if returns.is_empty() {
        return Err(MarketDataError::InsufficientData("need at least 2 prices".into()));
    }
    if horizon_steps == 0 {
        return Err(MarketDataError::InsufficientData(
            "horizon must be at least one step".into(),
        ));
    }
    let mu = compensated_sum(returns.iter().copied()) / returns.len() as f64;
    let sigma = match window {
        SigmaWindow::PerStep if returns.len() == 1 => 0.0,
        SigmaWindow::PerStep => mean_and_std(&returns)?.1,
        SigmaWindow::Monthly => {
            let monthly: Vec<f64> = returns
                .chunks_exact(MONTH_STEPS)
                .map(|c| compensated_sum(c.iter().copied()))
                .collect();
            mean_and_std(&monthly)
                .map_err(|_| {
                    MarketDataError::InsufficientData(format!(
                        "monthly sigma needs at least {} returns, have {}",
                        2 * MONTH_STEPS,
                        returns.len()
                    ))
                })?
                .1
        }
    };
    let r = match rate {
        RateSource::Constant(r) => r,
        RateSource::Column { periods_per_year } => {
            let rates = s
                .rates()
                .ok_or_else(|| MarketDataError::InsufficientData("series has no rate column".into()))?;
            compensated_sum(rates.iter().copied()) / rates.len() as f64 / periods_per_year
        }
    };
    let params = MarketParams::new(mu, r, sigma, horizon_steps as f64)?;
    Ok(EstimatedParams {
        params,
        sample_size: returns.len(),
        sigma_window: window,
        horizon_steps,
    })
}

/// Whether `mu` and `sigma` stay at their initial estimates during the backtest.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParamMode {
    #[default]
    Fixed,
    /// Before trading over step `k >= window`, re-estimate per-step `mu` and
    /// `sigma` from the `window` returns that end at record `k`. Earlier
    /// steps use the initial estimates. The signal `b` and the driving path
    /// stay tied to the initial estimates.
    Rolling { window: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct StrategyBacktest {
    pub kind: StrategyKind,
    /// `wealth[0] = 1`, one entry per record in the window.
    pub wealth: Vec<f64>,
    /// Portfolio held from record `k` to `k + 1`.
    pub pi: Vec<f64>,
}

impl StrategyBacktest {
    pub fn terminal(&self) -> f64 {
        *self.wealth.last().expect("non-empty")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BacktestResult {
    pub dates: Vec<NaiveDate>,
    pub estimated: EstimatedParams,
    pub implied_b: f64,
    pub param_mode: ParamMode,
    pub strategies: Vec<StrategyBacktest>,
    /// `exp{(1-pi) r T + pi mu T + sigma pi b}` for the optimal Skorokhod indicator.
    pub skorokhod_closed_form_terminal: f64,
}

/// Default menu: honest, forward (deterministic) and Skorokhod, all without shorting.
pub const DEFAULT_STRATEGIES: [StrategyKind; 3] = [
    StrategyKind::Honest,
    StrategyKind::ForwardDeterministic,
    StrategyKind::SkorokhodInsider,
];

/// Runs the daily update `X_k = X_{k-1} exp{(1 - pi) r + pi ln(S_k/S_{k-1})}`
/// over the first `horizon_steps` steps of `s`, every strategy with the
/// no-short constraint. The insider signal is implied from the window's
/// terminal price.
pub fn backtest(
    s: &PriceSeries,
    e: &EstimatedParams,
    strategies: &[StrategyKind],
    mode: ParamMode,
) -> Result<BacktestResult, MarketDataError> {
    let n = e.horizon_steps;
    if n + 1 > s.len() {
        return Err(MarketDataError::HorizonTooLong {
            horizon: n,
            available: s.len().saturating_sub(1),
        });
    }
    let p = e.params;
    let prices = &s.prices()[..=n];
    let returns: Vec<f64> = prices.windows(2).map(|w| (w[1] / w[0]).ln()).collect();
    let needs_signal = strategies.iter().any(|k| *k != StrategyKind::Honest);
    let b = if needs_signal || p.sigma > 0.0 {
        implied_b(prices[0], prices[n], &p)?
    } else {
        f64::NAN
    };
    let drift = p.mu - 0.5 * p.sigma * p.sigma;
    let driving: Vec<f64> = prices
        .iter()
        .enumerate()
        .map(|(k, &sk)| ((sk / prices[0]).ln() - drift * k as f64) / p.sigma)
        .collect();
    let step_params: Vec<MarketParams> = match mode {
        ParamMode::Fixed => vec![p; n],
        ParamMode::Rolling { window } => {
            if window < 2 {
                return Err(MarketDataError::InsufficientData(
                    "rolling window needs at least 2 returns".into(),
                ));
            }
            let all = s.log_returns();
            (0..n)
                .map(|k| {
                    if k < window {
                        return Ok(p);
                    }
                    let (mu, sigma) = mean_and_std(&all[k - window..k])?;
                    Ok(MarketParams { mu, sigma, ..p })
                })
                .collect::<Result<_, MarketDataError>>()?
        }
    };

    let mut out = Vec::with_capacity(strategies.len());
    for &kind in strategies {
        let spec = StrategySpec::no_short(kind);
        let mut wealth = Vec::with_capacity(n + 1);
        let mut pis = Vec::with_capacity(n);
        let mut log_x = 0.0;
        wealth.push(1.0);
        for (k, &lr) in returns.iter().enumerate() {
            let pk = &step_params[k];
            let pi = spec.portfolio(pk, b, k as f64, driving[k])?;
            log_x += (1.0 - pi) * pk.r + pi * lr;
            pis.push(pi);
            wealth.push(log_x.exp());
        }
        out.push(StrategyBacktest { kind, wealth, pi: pis });
    }
    let sk_pi = StrategySpec::no_short(StrategyKind::SkorokhodInsider).portfolio(&p, b, 0.0, 0.0)?;
    Ok(BacktestResult {
        dates: s.dates()[..=n].to_vec(),
        estimated: *e,
        implied_b: b,
        param_mode: mode,
        strategies: out,
        skorokhod_closed_form_terminal: skorokhod_terminal_wealth(&p, b, sk_pi),
    })
}

impl BacktestResult {
    /// CSV `date,wealth,pi` for one strategy; the last row has no portfolio.
    pub fn write_strategy_csv<W: Write>(&self, index: usize, mut out: W) -> std::io::Result<()> {
        let st = &self.strategies[index];
        writeln!(out, "date,wealth,pi")?;
        for (k, w) in st.wealth.iter().enumerate() {
            let pi = st.pi.get(k).map(|x| fmt_sig(*x)).unwrap_or_default();
            writeln!(out, "{},{},{}", self.dates[k].format("%Y-%m-%d"), fmt_sig(*w), pi)?;
        }
        Ok(())
    }

    pub fn summary(&self) -> BacktestSummary {
        BacktestSummary {
            schema_version: SUMMARY_SCHEMA_VERSION,
            start_date: self.dates[0].format("%Y-%m-%d").to_string(),
            end_date: self.dates[self.dates.len() - 1].format("%Y-%m-%d").to_string(),
            horizon_steps: self.estimated.horizon_steps,
            params: self.estimated.params,
            sample_size: self.estimated.sample_size,
            sigma_window: self.estimated.sigma_window,
            param_mode: self.param_mode,
            implied_b: self.implied_b,
            terminal_wealth: self
                .strategies
                .iter()
                .map(|s| (s.kind.name().to_string(), s.terminal()))
                .collect(),
            skorokhod_closed_form_terminal_wealth: self.skorokhod_closed_form_terminal,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BacktestSummary {
    pub schema_version: u32,
    pub start_date: String,
    pub end_date: String,
    pub horizon_steps: usize,
    pub params: MarketParams,
    pub sample_size: usize,
    pub sigma_window: SigmaWindow,
    pub param_mode: ParamMode,
    pub implied_b: f64,
    /// Discrete-update terminal wealth per strategy name.
    pub terminal_wealth: BTreeMap<String, f64>,
    /// Terminal wealth of the Skorokhod trader from its explicit solution.
    pub skorokhod_closed_form_terminal_wealth: f64,
}
