//! Wealth simulation, Monte Carlo estimates of `E[log X_T]` and the explicit
//! Skorokhod wealth.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::{compensated_sum, map_indexed, Execution};
use crate::format::fmt_sig;
use crate::paths::{sample_bridge_sequential, sample_brownian, BridgeSpec, PathError, SamplePath, TimeGrid};
use crate::rng::{NormalSource, PathRng};
use crate::strategies::{skorokhod_pi, Constraint, MarketParams, StrategyError, StrategyKind, StrategySpec};

#[derive(Debug, Error, PartialEq)]
pub enum WealthError {
    #[error(transparent)]
    Strategy(#[from] StrategyError),
    #[error(transparent)]
    Path(#[from] PathError),
    #[error("prices must be positive and finite (index {index}: {value})")]
    NonPositivePrice { index: usize, value: f64 },
    #[error("implied signal needs sigma > 0")]
    ZeroVolatility,
    #[error("path grid ends at {grid}, after the market horizon {horizon}")]
    GridBeyondHorizon { grid: f64, horizon: f64 },
    #[error("Monte Carlo needs at least one path")]
    NoPaths,
}

/// Per-step wealth update.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WealthRule {
    /// `X_k = X_{k-1} exp{(1 - pi) r dt + pi ln(S_k / S_{k-1})}`, the daily
    /// backtest update.
    #[default]
    Backtest,
    /// Exact growth of a portfolio rebalanced continuously at the fixed
    /// fraction `pi` over the step: the backtest exponent plus
    /// `sigma^2 pi (1 - pi) dt / 2`. Its expected log matches the
    /// continuous-time objective.
    Rebalanced,
}

/// Stock path `S_t = S_0 exp{(mu - sigma^2/2) t + sigma B_t}` driven by `B`.
pub fn stock_from_driving(s0: f64, p: &MarketParams, driving: &SamplePath) -> Result<SamplePath, WealthError> {
    p.validate()?;
    if !(s0.is_finite() && s0 > 0.0) {
        return Err(WealthError::NonPositivePrice { index: 0, value: s0 });
    }
    let grid = *driving.grid();
    let drift = p.mu - 0.5 * p.sigma * p.sigma;
    let values = driving
        .values()
        .iter()
        .enumerate()
        .map(|(k, &bk)| s0 * (drift * grid.time(k) + p.sigma * bk).exp())
        .collect();
    Ok(SamplePath::new(grid, values)?)
}

/// Signal implied by the terminal price: `b = (ln(S_T/S_0) - (mu - sigma^2/2) T) / sigma`.
pub fn implied_b(s0: f64, s_terminal: f64, p: &MarketParams) -> Result<f64, WealthError> {
    p.validate()?;
    for (index, value) in [(0, s0), (1, s_terminal)] {
        if !(value.is_finite() && value > 0.0) {
            return Err(WealthError::NonPositivePrice { index, value });
        }
    }
    if p.sigma == 0.0 {
        return Err(WealthError::ZeroVolatility);
    }
    Ok(((s_terminal / s0).ln() - (p.mu - 0.5 * p.sigma * p.sigma) * p.horizon) / p.sigma)
}

/// Wealth trajectory with the portfolio held over each step.
#[derive(Clone, Debug, PartialEq)]
pub struct WealthPath {
    pub grid: TimeGrid,
    /// `wealth[0] = 1`.
    pub wealth: Vec<f64>,
    /// `pi[k]` is held over `[t_k, t_{k+1})`; one entry per step.
    pub pi: Vec<f64>,
}

impl WealthPath {
    pub fn terminal(&self) -> f64 {
        *self.wealth.last().expect("wealth path is never empty")
    }

    /// CSV with header `t,wealth,pi`; the last row has no portfolio.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "t,wealth,pi")?;
        for (k, w) in self.wealth.iter().enumerate() {
            let pi = self.pi.get(k).map(|x| fmt_sig(*x)).unwrap_or_default();
            writeln!(out, "{},{},{}", fmt_sig(self.grid.time(k)), fmt_sig(*w), pi)?;
        }
        Ok(())
    }
}

#[inline]
fn step_log_growth(pi: f64, r_dt: f64, log_return: f64, sigma: f64, dt: f64, rule: WealthRule) -> f64 {
    let base = (1.0 - pi) * r_dt + pi * log_return;
    match rule {
        WealthRule::Backtest => base,
        WealthRule::Rebalanced => base + 0.5 * sigma * sigma * pi * (1.0 - pi) * dt,
    }
}

/// Log-growth of every step and the portfolio used, given the driving path
/// values and the per-step log returns. Portfolios are read at left grid points.
#[allow(clippy::too_many_arguments)]
fn log_increments(
    grid: &TimeGrid,
    driving: &[f64],
    log_returns: &[f64],
    strategy: &StrategySpec,
    p: &MarketParams,
    b: f64,
    rule: WealthRule,
    mut visit: impl FnMut(f64, f64),
) -> Result<(), WealthError> {
    let dt = grid.dt();
    let r_dt = p.r * dt;
    let fixed = if strategy.kind().is_adapted() {
        None
    } else {
        Some(strategy.portfolio(p, b, 0.0, 0.0)?)
    };
    for (k, &lr) in log_returns.iter().enumerate() {
        let pi = match fixed {
            Some(pi) => pi,
            None => strategy.portfolio(p, b, grid.time(k), driving[k])?,
        };
        visit(pi, step_log_growth(pi, r_dt, lr, p.sigma, dt, rule));
    }
    Ok(())
}

fn check_grid(grid: &TimeGrid, p: &MarketParams) -> Result<(), WealthError> {
    if grid.horizon() > p.horizon * (1.0 + 1e-12) {
        return Err(WealthError::GridBeyondHorizon {
            grid: grid.horizon(),
            horizon: p.horizon,
        });
    }
    Ok(())
}

/// Wealth from a stock path, starting at `X_0 = 1`.
///
/// The adapted forward strategy needs the driving value `B_t`; it is
/// recovered from the stock path by inverting [`stock_from_driving`].
pub fn simulate_wealth(
    stock: &SamplePath,
    strategy: &StrategySpec,
    p: &MarketParams,
    b: f64,
    rule: WealthRule,
) -> Result<WealthPath, WealthError> {
    p.validate()?;
    let grid = *stock.grid();
    check_grid(&grid, p)?;
    let s = stock.values();
    if let Some((index, &value)) = s.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v > 0.0)) {
        return Err(WealthError::NonPositivePrice { index, value });
    }
    let log_returns: Vec<f64> = s.windows(2).map(|w| (w[1] / w[0]).ln()).collect();
    let driving: Vec<f64> = if strategy.kind().is_adapted() {
        if p.sigma == 0.0 {
            return Err(WealthError::ZeroVolatility);
        }
        let drift = p.mu - 0.5 * p.sigma * p.sigma;
        s.iter()
            .enumerate()
            .map(|(k, &sk)| ((sk / s[0]).ln() - drift * grid.time(k)) / p.sigma)
            .collect()
    } else {
        Vec::new()
    };
    let mut wealth = Vec::with_capacity(s.len());
    let mut pis = Vec::with_capacity(s.len() - 1);
    let mut log_x = 0.0;
    wealth.push(1.0);
    log_increments(&grid, &driving, &log_returns, strategy, p, b, rule, |pi, g| {
        log_x += g;
        pis.push(pi);
        wealth.push(log_x.exp());
    })?;
    Ok(WealthPath { grid, wealth, pi: pis })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MCConfig {
    pub n_paths: usize,
    pub master_seed: u64,
    /// Simulation grid; may stop before the market horizon (truncated runs).
    pub grid: TimeGrid,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MCEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_paths: usize,
}

impl MCEstimate {
    /// Mean by compensated summation in index order; the variance uses
    /// deviations from the first sample, so identical samples give exactly 0.
    pub fn from_samples(samples: &[f64]) -> Result<Self, WealthError> {
        let n = samples.len();
        if n == 0 {
            return Err(WealthError::NoPaths);
        }
        let mean = compensated_sum(samples) / n as f64;
        let shift = samples[0];
        let dev: Vec<f64> = samples.iter().map(|x| x - shift).collect();
        let dev_mean = compensated_sum(&dev) / n as f64;
        let var = if n > 1 {
            let sq: Vec<f64> = dev.iter().map(|d| (d - dev_mean) * (d - dev_mean)).collect();
            compensated_sum(&sq) / (n - 1) as f64
        } else {
            0.0
        };
        Ok(Self {
            mean,
            std_error: (var / n as f64).sqrt(),
            n_paths: n,
        })
    }
}

/// JSON summary of a Monte Carlo run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MCSummary {
    pub mean: f64,
    pub std_error: f64,
    pub n_paths: usize,
    pub strategy: String,
}

impl MCSummary {
    pub fn new(estimate: &MCEstimate, strategy: StrategyKind) -> Self {
        Self {
            mean: estimate.mean,
            std_error: estimate.std_error,
            n_paths: estimate.n_paths,
            strategy: strategy.name().to_string(),
        }
    }
}

/// Log terminal wealth of one bridge-driven path under the rebalanced rule.
///
/// The Skorokhod trader instead evaluates its explicit solution on a fresh
/// Brownian path over the full horizon.
pub fn path_log_wealth(
    strategy: &StrategySpec,
    p: &MarketParams,
    b: f64,
    grid: TimeGrid,
    rng: &mut PathRng,
) -> Result<f64, WealthError> {
    if strategy.kind() == StrategyKind::SkorokhodInsider {
        let pi = skorokhod_pi(p, b, Constraint::NoShort)?;
        let w = sample_brownian(TimeGrid::new(p.horizon, grid.n_steps())?, rng);
        return Ok(skorokhod_log_wealth_explicit(p, b, pi, &w));
    }
    let spec = BridgeSpec::new(b, p.horizon)?;
    let bridge = sample_bridge_sequential(&spec, grid, rng)?;
    driven_log_wealth(strategy, p, b, &grid, bridge.values())
}

/// Rebalanced-rule log wealth along a driving path sampled on `grid`.
fn driven_log_wealth(
    strategy: &StrategySpec,
    p: &MarketParams,
    b: f64,
    grid: &TimeGrid,
    driving: &[f64],
) -> Result<f64, WealthError> {
    let drift_dt = (p.mu - 0.5 * p.sigma * p.sigma) * grid.dt();
    let log_returns: Vec<f64> = driving.windows(2).map(|w| drift_dt + p.sigma * (w[1] - w[0])).collect();
    let mut total = Vec::with_capacity(log_returns.len());
    log_increments(
        grid,
        driving,
        &log_returns,
        strategy,
        p,
        b,
        WealthRule::Rebalanced,
        |_, g| total.push(g),
    )?;
    Ok(compensated_sum(&total))
}

/// Monte Carlo estimate of `E[log X_T]` when the signal is not fixed: each
/// path is an ordinary Brownian motion and an insider is told `b = W_T`.
///
/// For the honest trader this is its own value; for an insider it is the
/// value averaged over `b ~ N(0, T)`.
pub fn mc_unconditional_log_utility(
    strategy: &StrategySpec,
    p: &MarketParams,
    cfg: &MCConfig,
    exec: Execution,
) -> Result<MCEstimate, WealthError> {
    p.validate()?;
    check_grid(&cfg.grid, p)?;
    if cfg.n_paths == 0 {
        return Err(WealthError::NoPaths);
    }
    strategy.portfolio(p, 0.0, 0.0, 0.0)?;
    let samples = map_indexed(cfg.n_paths, exec, |i| {
        let mut rng = PathRng::new(cfg.master_seed, i as u64);
        let w = sample_brownian(cfg.grid, &mut rng);
        let gap = p.horizon - cfg.grid.horizon();
        let b = w.terminal() + if gap > 0.0 { gap.sqrt() * rng.next_normal() } else { 0.0 };
        if strategy.kind() == StrategyKind::SkorokhodInsider {
            let pi = skorokhod_pi(p, b, Constraint::NoShort)?;
            return Ok(skorokhod_terminal_wealth(p, b, pi).ln());
        }
        driven_log_wealth(strategy, p, b, &cfg.grid, w.values())
    });
    let samples: Vec<f64> = samples.into_iter().collect::<Result<_, _>>()?;
    MCEstimate::from_samples(&samples)
}

/// Monte Carlo estimate of `E[log X_T]` over bridge-driven stock paths.
///
/// Honest, bridge and forward traders use the rebalanced wealth update with
/// left-point portfolios. The Skorokhod trader's wealth is the explicit
/// solution of its linear equation, which is path independent.
pub fn mc_expected_log_utility(
    strategy: &StrategySpec,
    p: &MarketParams,
    b: f64,
    cfg: &MCConfig,
    exec: Execution,
) -> Result<MCEstimate, WealthError> {
    p.validate()?;
    check_grid(&cfg.grid, p)?;
    if cfg.n_paths == 0 {
        return Err(WealthError::NoPaths);
    }
    // Surface parameter errors once instead of per path.
    strategy.portfolio(p, b, 0.0, 0.0)?;
    let samples = map_indexed(cfg.n_paths, exec, |i| {
        let mut rng = PathRng::new(cfg.master_seed, i as u64);
        path_log_wealth(strategy, p, b, cfg.grid, &mut rng)
    });
    let samples: Vec<f64> = samples.into_iter().collect::<Result<_, _>>()?;
    MCEstimate::from_samples(&samples)
}

/// Terminal wealth `exp{(1 - pi) rT + pi mu T + sigma pi b}` of the
/// Skorokhod trader holding a constant fraction `pi`.
pub fn skorokhod_terminal_wealth(p: &MarketParams, b: f64, pi: f64) -> f64 {
    ((1.0 - pi) * p.r * p.horizon + pi * p.mu * p.horizon + p.sigma * pi * b).exp()
}

/// Log of the explicit Skorokhod wealth evaluated term by term along a
/// Brownian path `w` on `[0, T]`:
///
/// `pi sigma W_T - pi^2 sigma^2 T / 2
///   + int_0^T [(1 - pi) r + pi mu + pi sigma (b - W_T + pi sigma (T - s)) / T] ds`.
///
/// The `W_T` terms cancel, so the result does not depend on the path.
pub fn skorokhod_log_wealth_explicit(p: &MarketParams, b: f64, pi: f64, w: &SamplePath) -> f64 {
    let big_t = p.horizon;
    let w_t = w.terminal();
    let vol = pi * p.sigma;
    let stochastic = vol * w_t - 0.5 * vol * vol * big_t;
    // The integrand is affine in s, so the trapezoidal rule on any grid is exact.
    let integrand = |s: f64| (1.0 - pi) * p.r + pi * p.mu + vol * (b - w_t + vol * (big_t - s)) / big_t;
    let drift = 0.5 * (integrand(0.0) + integrand(big_t)) * big_t;
    stochastic + drift
}

/// Log of pathwise buy-and-hold wealth `(mu - sigma^2/2) T + sigma b`, for
/// comparison with the Skorokhod solution at `pi = 1`.
pub fn buy_and_hold_log_wealth(p: &MarketParams, b: f64) -> f64 {
    (p.mu - 0.5 * p.sigma * p.sigma) * p.horizon + p.sigma * b
}
