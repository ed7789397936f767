//! Signal-distribution experiments: per-draw values under a Gaussian signal
//! with histograms, and the density-weighted value curve.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::exec::{compensated_sum, map_indexed, Execution};
use crate::format::fmt_sig;
use crate::paths::{sample_bridge_sequential, BridgeSpec, TimeGrid};
use crate::rng::{NormalSource, PathRng};
use crate::strategies::{MarketParams, StrategyKind, StrategySpec};
use crate::valuation::{
    unconditional_forward_quadrature, unconditional_skorokhod, unconditional_skorokhod_quadrature,
    value_forward_noshort, value_skorokhod, SignalDistribution, ValuationError, QUAD_WINDOW_SD,
};
use crate::wealth::{simulate_wealth, stock_from_driving, WealthError, WealthRule};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleStats {
    pub mean: f64,
    /// Sample variance (n - 1); zero for a single draw.
    pub variance: f64,
}

impl SampleStats {
    pub fn from_samples(x: &[f64]) -> Self {
        let n = x.len() as f64;
        let mean = compensated_sum(x) / n;
        let variance = if x.len() > 1 {
            compensated_sum(x.iter().map(|v| (v - mean) * (v - mean))) / (n - 1.0)
        } else {
            0.0
        };
        Self { mean, variance }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistributionConfig {
    pub params: MarketParams,
    pub signal: SignalDistribution,
    pub draws: usize,
    pub seed: u64,
    /// Steps of the realized path used for the backtest columns.
    pub steps: usize,
    pub s0: f64,
}

/// Per-draw outcome. `forward` and `skorokhod` are the conditional values
/// `V(b)` (no shorting); the `backtest_*` fields are realized log wealths
/// of the daily update on one stock path ending consistently with `b`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DrawOutcome {
    pub b: f64,
    pub forward: f64,
    pub skorokhod: f64,
    pub backtest_forward: f64,
    pub backtest_skorokhod: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ValueDistribution {
    pub draws: Vec<DrawOutcome>,
    pub forward: SampleStats,
    pub skorokhod: SampleStats,
    pub backtest_forward: SampleStats,
    pub backtest_skorokhod: SampleStats,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ExperimentError {
    #[error(transparent)]
    Valuation(#[from] ValuationError),
    #[error(transparent)]
    Wealth(#[from] WealthError),
    #[error("need at least one draw")]
    NoDraws,
    #[error("histogram needs at least one bin")]
    NoBins,
}

/// Draws `b = e + sqrt(var) Z` and evaluates both schemes.
///
/// Draw `i` uses stream `i` of the master seed, and `Z` is the first normal
/// of that stream, so runs with different means share the same `Z`s.
pub fn value_distribution(cfg: &DistributionConfig, exec: Execution) -> Result<ValueDistribution, ExperimentError> {
    if cfg.draws == 0 {
        return Err(ExperimentError::NoDraws);
    }
    let p = cfg.params;
    p.validate().map_err(ValuationError::from)?;
    let grid = TimeGrid::new(p.horizon, cfg.steps).map_err(WealthError::from)?;
    let sd = cfg.signal.std_dev();
    let forward_spec = StrategySpec::no_short(StrategyKind::ForwardDeterministic);
    let sk_spec = StrategySpec::no_short(StrategyKind::SkorokhodInsider);
    let results = map_indexed(cfg.draws, exec, |i| -> Result<DrawOutcome, ExperimentError> {
        let mut rng = PathRng::new(cfg.seed, i as u64);
        let b = cfg.signal.mean + sd * rng.next_normal();
        let bridge = sample_bridge_sequential(
            &BridgeSpec::new(b, p.horizon).map_err(WealthError::from)?,
            grid,
            &mut rng,
        )
        .map_err(WealthError::from)?;
        let stock = stock_from_driving(cfg.s0, &p, &bridge)?;
        let fw_path = simulate_wealth(&stock, &forward_spec, &p, b, WealthRule::Backtest)?;
        let sk_path = simulate_wealth(&stock, &sk_spec, &p, b, WealthRule::Backtest)?;
        Ok(DrawOutcome {
            b,
            forward: value_forward_noshort(&p, b)?.total,
            skorokhod: value_skorokhod(&p, b)?.total,
            backtest_forward: fw_path.terminal().ln(),
            backtest_skorokhod: sk_path.terminal().ln(),
        })
    });
    let draws: Vec<DrawOutcome> = results.into_iter().collect::<Result<_, _>>()?;
    let stats = |f: fn(&DrawOutcome) -> f64| SampleStats::from_samples(&draws.iter().map(f).collect::<Vec<_>>());
    Ok(ValueDistribution {
        forward: stats(|d| d.forward),
        skorokhod: stats(|d| d.skorokhod),
        backtest_forward: stats(|d| d.backtest_forward),
        backtest_skorokhod: stats(|d| d.backtest_skorokhod),
        draws,
    })
}

pub fn write_draws_csv<W: Write>(draws: &[DrawOutcome], mut out: W) -> std::io::Result<()> {
    writeln!(out, "b,v_forward,v_skorokhod,backtest_forward,backtest_skorokhod")?;
    for d in draws {
        writeln!(
            out,
            "{},{},{},{},{}",
            fmt_sig(d.b),
            fmt_sig(d.forward),
            fmt_sig(d.skorokhod),
            fmt_sig(d.backtest_forward),
            fmt_sig(d.backtest_skorokhod)
        )?;
    }
    Ok(())
}

/// Equal-width histogram; `edges.len() == counts.len() + 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl Histogram {
    /// Bins span `[min, max]`, the last bin closed. When every value is
    /// equal the histogram has one zero-width bin holding all of them.
    pub fn new(values: &[f64], bins: usize) -> Result<Self, ExperimentError> {
        if values.is_empty() {
            return Err(ExperimentError::NoDraws);
        }
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Self::with_range(values, lo, hi, bins)
    }

    /// Bins span `[lo, hi]`; values outside are dropped.
    pub fn with_range(values: &[f64], lo: f64, hi: f64, bins: usize) -> Result<Self, ExperimentError> {
        if bins == 0 {
            return Err(ExperimentError::NoBins);
        }
        if lo == hi {
            return Ok(Self {
                edges: vec![lo, hi],
                counts: vec![values.iter().filter(|v| **v == lo).count() as u64],
            });
        }
        let width = (hi - lo) / bins as f64;
        let mut edges: Vec<f64> = (0..bins).map(|k| lo + width * k as f64).collect();
        edges.push(hi);
        let mut counts = vec![0u64; bins];
        for &v in values.iter().filter(|v| (lo..=hi).contains(*v)) {
            let k = (((v - lo) / width) as usize).min(bins - 1);
            counts[k] += 1;
        }
        Ok(Self { edges, counts })
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "bin_lo,bin_hi,count")?;
        for (k, c) in self.counts.iter().enumerate() {
            writeln!(out, "{},{},{}", fmt_sig(self.edges[k]), fmt_sig(self.edges[k + 1]), c)?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedRow {
    pub b: f64,
    pub density: f64,
    pub forward: f64,
    pub skorokhod: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedValue {
    pub rows: Vec<WeightedRow>,
    pub forward_closed_form: f64,
    pub forward_quadrature: f64,
    /// The printed erf expression for the forward scheme; see
    /// [`crate::valuation::unconditional_forward_printed`].
    pub forward_printed: f64,
    pub skorokhod_closed_form: f64,
    pub skorokhod_quadrature: f64,
}

/// `V(b) * density(b)` on `n` points over `mean +- 5 sd`, plus the
/// unconditional values.
pub fn weighted_value_curve(
    p: &MarketParams,
    d: &SignalDistribution,
    n: usize,
) -> Result<WeightedValue, ExperimentError> {
    if n < 2 {
        return Err(ExperimentError::NoDraws);
    }
    let half = 0.5 * QUAD_WINDOW_SD * d.std_dev();
    let (lo, hi) = (d.mean - half, d.mean + half);
    let rows = (0..n)
        .map(|k| {
            let b = if k + 1 == n {
                hi
            } else {
                lo + (hi - lo) * k as f64 / (n - 1) as f64
            };
            let density = d.density(b);
            Ok(WeightedRow {
                b,
                density,
                forward: value_forward_noshort(p, b)?.total * density,
                skorokhod: value_skorokhod(p, b)?.total * density,
            })
        })
        .collect::<Result<Vec<_>, ValuationError>>()?;
    let fw = unconditional_forward_quadrature(p, d)?;
    Ok(WeightedValue {
        rows,
        forward_closed_form: fw.closed_form,
        forward_quadrature: fw.quadrature,
        forward_printed: fw.printed,
        skorokhod_closed_form: unconditional_skorokhod(p, d)?,
        skorokhod_quadrature: unconditional_skorokhod_quadrature(p, d)?,
    })
}

pub fn write_weighted_csv<W: Write>(rows: &[WeightedRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "b,density,forward_weighted,skorokhod_weighted")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{}",
            fmt_sig(r.b),
            fmt_sig(r.density),
            fmt_sig(r.forward),
            fmt_sig(r.skorokhod)
        )?;
    }
    Ok(())
}
