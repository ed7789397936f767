//! Closed-form values of the log-utility problem and their unconditional
//! expectations over a Gaussian signal.
//!
//! Every value is `E[log X_T]` for unit initial wealth. The no-shorting
//! formulas are piecewise in the signal `b` with breakpoints at `-theta T`
//! and `-theta T + sigma T`.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::format::fmt_sig;
use crate::quadrature::{integrate, QuadError};
use crate::special::{erf, gaussian_density, normal_cdf, normal_pdf};
use crate::strategies::{skorokhod_invests, MarketParams, ParamCurves, StrategyError};

#[derive(Debug, Error, PartialEq)]
pub enum ValuationError {
    #[error(transparent)]
    Params(#[from] StrategyError),
    #[error("truncation must satisfy 0 < eps <= T (eps={eps}, T={horizon})")]
    InvalidTruncation { eps: f64, horizon: f64 },
    #[error("signal variance must be positive and finite, got {0}")]
    InvalidVariance(f64),
    #[error("adapted forward value needs sigma > 0")]
    DegenerateVolatility,
    #[error(transparent)]
    Quadrature(#[from] QuadError),
}

/// Which piece of a no-shorting value formula is active.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Region {
    RiskFreeOnly,
    Interior,
    FullyInvested,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueBreakdown {
    pub total: f64,
    pub region: Region,
}

/// Law `N(mean, variance)` of the terminal signal `b`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignalDistribution {
    pub mean: f64,
    pub variance: f64,
}

impl SignalDistribution {
    pub fn new(mean: f64, variance: f64) -> Result<Self, ValuationError> {
        if !(variance.is_finite() && variance > 0.0) || !mean.is_finite() {
            return Err(ValuationError::InvalidVariance(variance));
        }
        Ok(Self { mean, variance })
    }

    pub fn std_dev(&self) -> f64 {
        self.variance.sqrt()
    }

    pub fn density(&self, b: f64) -> f64 {
        gaussian_density(b, self.mean, self.variance)
    }
}

/// Absolute tolerance of the signal-space quadratures.
pub const QUAD_TOL: f64 = 1e-10;
/// Half-width of the integration window in standard deviations.
pub const QUAD_WINDOW_SD: f64 = 10.0;

/// Honest trader without shorting.
pub fn value_honest_noshort(p: &MarketParams) -> Result<ValueBreakdown, ValuationError> {
    p.validate()?;
    let theta = p.theta();
    let t = p.horizon;
    Ok(if theta <= 0.0 {
        ValueBreakdown {
            total: p.r * t,
            region: Region::RiskFreeOnly,
        }
    } else if theta < p.sigma {
        ValueBreakdown {
            total: p.r * t + 0.5 * theta * theta * t,
            region: Region::Interior,
        }
    } else {
        ValueBreakdown {
            total: p.mu * t - 0.5 * p.sigma * p.sigma * t,
            region: Region::FullyInvested,
        }
    })
}

/// Forward-integral insider without shorting.
pub fn value_forward_noshort(p: &MarketParams, b: f64) -> Result<ValueBreakdown, ValuationError> {
    p.validate()?;
    let t = p.horizon;
    if p.is_degenerate() {
        // sigma -> 0: the clamped portfolio is all-or-nothing on the sign of mu - r.
        let invest = p.mu > p.r || (p.mu == p.r && b > 0.0);
        return Ok(if invest {
            ValueBreakdown {
                total: p.mu * t,
                region: Region::FullyInvested,
            }
        } else {
            ValueBreakdown {
                total: p.r * t,
                region: Region::RiskFreeOnly,
            }
        });
    }
    let theta = p.theta();
    let lower = -theta * t;
    let upper = lower + p.sigma * t;
    Ok(if b <= lower {
        ValueBreakdown {
            total: p.r * t,
            region: Region::RiskFreeOnly,
        }
    } else if b <= upper {
        let a = theta + b / t;
        ValueBreakdown {
            total: p.r * t + 0.5 * a * a * t,
            region: Region::Interior,
        }
    } else {
        ValueBreakdown {
            total: p.mu * t + p.sigma * b - 0.5 * p.sigma * p.sigma * t,
            region: Region::FullyInvested,
        }
    })
}

/// Skorokhod insider without shorting: `rT + (theta sigma T + sigma b) 1{b > -theta T}`.
pub fn value_skorokhod(p: &MarketParams, b: f64) -> Result<ValueBreakdown, ValuationError> {
    p.validate()?;
    Ok(if skorokhod_invests(p, b) {
        ValueBreakdown {
            total: p.r * p.horizon + ((p.mu - p.r) * p.horizon + p.sigma * b).max(0.0),
            region: Region::FullyInvested,
        }
    } else {
        ValueBreakdown {
            total: p.r * p.horizon,
            region: Region::RiskFreeOnly,
        }
    })
}

/// Bridge / forward value for deterministic parameter curves,
/// `int_0^T [r_t + ((mu_t - r_t)/sigma_t + b/T)^2 / 2] dt` by the trapezoidal rule.
pub fn value_bb_or_forward_det(c: &ParamCurves, b: f64) -> f64 {
    let big_t = c.grid().horizon();
    let (mu, r, sigma) = (c.mu(), c.r(), c.sigma());
    c.trapezoid(|k| {
        let a = (mu[k] - r[k]) / sigma[k] + b / big_t;
        r[k] + 0.5 * a * a
    })
}

/// Value of the adapted forward insider on `[0, T - eps]`.
///
/// Taking the expectation of `(theta + (b - B_t)/(T - t))^2` under the
/// bridge law (mean `bt/T`, variance `t(T-t)/T`) gives
/// `(T - eps)[r + (theta + b/T)^2 / 2] + ln(T/eps)/2 - (T - eps)/(2T)`,
/// which diverges logarithmically as `eps -> 0`.
pub fn value_forward_adapted_truncated(p: &MarketParams, b: f64, eps: f64) -> Result<f64, ValuationError> {
    p.validate()?;
    let t = p.horizon;
    if !(eps > 0.0 && eps <= t) {
        return Err(ValuationError::InvalidTruncation { eps, horizon: t });
    }
    if p.is_degenerate() {
        return Err(ValuationError::DegenerateVolatility);
    }
    let span = t - eps;
    let a = p.theta() + b / t;
    Ok(span * (p.r + 0.5 * a * a) + 0.5 * (t / eps).ln() - span / (2.0 * t))
}

/// `E[V_sk(b)]` for `b ~ N(mean, variance)`.
///
/// With `X = (mu - r)T + sigma b ~ N(M, S^2)` the value is
/// `rT + E[X^+] = rT + M Phi(M/S) + S phi(M/S)`.
pub fn unconditional_skorokhod(p: &MarketParams, d: &SignalDistribution) -> Result<f64, ValuationError> {
    p.validate()?;
    let m = (p.mu - p.r) * p.horizon + p.sigma * d.mean;
    let s = p.sigma * d.std_dev();
    let positive_part = if s > 0.0 {
        let z = m / s;
        m * normal_cdf(z) + s * normal_pdf(z)
    } else {
        m.max(0.0)
    };
    Ok(p.r * p.horizon + positive_part)
}

/// `E[V_fw(b)]` for `b ~ N(mean, variance)` with no shorting.
///
/// With `y = theta T + b ~ N(m, s^2)` the value is `rT` plus
/// `y^2 / (2T)` on `0 < y <= sigma T` and `sigma y - sigma^2 T / 2` beyond,
/// both integrated with truncated normal moments.
pub fn unconditional_forward(p: &MarketParams, d: &SignalDistribution) -> Result<f64, ValuationError> {
    p.validate()?;
    if p.is_degenerate() {
        return Err(ValuationError::DegenerateVolatility);
    }
    let t = p.horizon;
    let m = p.theta() * t + d.mean;
    let s = d.std_dev();
    let cap = p.sigma * t;
    if s == 0.0 {
        return Ok(value_forward_noshort(p, d.mean)?.total);
    }
    let (a, c) = (-m / s, (cap - m) / s);
    let (phi_a, phi_c) = (normal_pdf(a), normal_pdf(c));
    let (cdf_a, cdf_c) = (normal_cdf(a), normal_cdf(c));
    // E[y^2; 0 < y <= sigma T]
    let second = (m * m + s * s) * (cdf_c - cdf_a) + 2.0 * m * s * (phi_a - phi_c) + s * s * (a * phi_a - c * phi_c);
    let upper_tail = normal_cdf(-c);
    // E[y; y > sigma T]
    let first = m * upper_tail + s * phi_c;
    Ok(p.r * t + second / (2.0 * t) + p.sigma * first - 0.5 * p.sigma * cap * upper_tail)
}

/// The erf form for `b ~ N(0, 1)`, `T = 1`:
/// `r + (theta sigma / 2)(erf(theta/sqrt 2) + 1) + sigma e^{-theta^2/2} / sqrt(2 pi)`.
pub fn unconditional_skorokhod_standard(theta: f64, sigma: f64, r: f64) -> f64 {
    r + 0.5 * theta * sigma * (erf(theta / std::f64::consts::SQRT_2) + 1.0)
        + sigma * (-0.5 * theta * theta).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// The forward-scheme erf expression exactly as it is commonly printed for
/// `b ~ N(0, 1)`, `T = 1`. It does not match the quadrature of the piecewise
/// value and is kept only for side-by-side reporting.
pub fn unconditional_forward_printed(theta: f64, sigma: f64) -> f64 {
    let s2 = std::f64::consts::SQRT_2;
    let sqrt_2pi = (2.0 * std::f64::consts::PI).sqrt();
    0.25 * (theta + 1.0) * erf((sigma - theta) / s2)
        + 0.25 * (theta + 1.0) * erf(theta / s2)
        + 0.25
            * (2.0 / std::f64::consts::PI).sqrt()
            * (-0.5 * (theta * theta + sigma * sigma)).exp()
            * ((theta - sigma) * (theta * sigma).exp() - theta * (0.5 * sigma * sigma).exp())
        + 0.25 * sigma * (2.0 * theta - sigma) * (erf((theta - sigma) / s2) + 1.0)
        + sigma / sqrt_2pi * (-0.5 * (theta - sigma) * (theta - sigma)).exp()
}

/// Quadrature of `value(b) * density(b)` over the +-10 sd window, with the
/// value's breakpoints inserted as panel boundaries.
fn signal_expectation<F>(d: &SignalDistribution, kinks: &[f64], value: F) -> Result<f64, ValuationError>
where
    F: Fn(f64) -> f64,
{
    let lo = d.mean - QUAD_WINDOW_SD * d.std_dev();
    let hi = d.mean + QUAD_WINDOW_SD * d.std_dev();
    let mut points = vec![lo];
    let mut inner: Vec<f64> = kinks.iter().copied().filter(|k| *k > lo && *k < hi).collect();
    inner.sort_by(f64::total_cmp);
    points.extend(inner);
    points.push(hi);
    let q = integrate(|b| value(b) * d.density(b), &points, QUAD_TOL)?;
    Ok(q.value)
}

fn breakpoints(p: &MarketParams) -> Vec<f64> {
    if p.is_degenerate() {
        return vec![0.0];
    }
    let lower = -p.theta() * p.horizon;
    vec![lower, lower + p.sigma * p.horizon]
}

/// Quadrature oracle for [`unconditional_skorokhod`].
pub fn unconditional_skorokhod_quadrature(p: &MarketParams, d: &SignalDistribution) -> Result<f64, ValuationError> {
    p.validate()?;
    let kinks = breakpoints(p);
    signal_expectation(d, &kinks[..1], |b| {
        value_skorokhod(p, b).map(|v| v.total).unwrap_or(f64::NAN)
    })
}

/// Unconditional forward value with the printed erf expression alongside.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForwardUnconditional {
    pub closed_form: f64,
    /// Quadrature of the piecewise value.
    pub quadrature: f64,
    /// The printed erf expression evaluated at `(theta, sigma)`.
    pub printed: f64,
    pub discrepancy: f64,
}

pub fn unconditional_forward_quadrature(
    p: &MarketParams,
    d: &SignalDistribution,
) -> Result<ForwardUnconditional, ValuationError> {
    p.validate()?;
    let quadrature = signal_expectation(d, &breakpoints(p), |b| {
        value_forward_noshort(p, b).map(|v| v.total).unwrap_or(f64::NAN)
    })?;
    let printed = unconditional_forward_printed(p.theta(), p.sigma);
    Ok(ForwardUnconditional {
        closed_form: unconditional_forward(p, d)?,
        quadrature,
        printed,
        discrepancy: printed - quadrature,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueRow {
    pub b: f64,
    pub riskfree: f64,
    pub honest: f64,
    pub forward: f64,
    pub skorokhod: f64,
}

/// Value of each trader as a function of the signal.
pub fn value_curve(p: &MarketParams, b_grid: &[f64]) -> Result<Vec<ValueRow>, ValuationError> {
    let honest = value_honest_noshort(p)?.total;
    b_grid
        .iter()
        .map(|&b| {
            Ok(ValueRow {
                b,
                riskfree: p.r * p.horizon,
                honest,
                forward: value_forward_noshort(p, b)?.total,
                skorokhod: value_skorokhod(p, b)?.total,
            })
        })
        .collect()
}

pub fn write_value_curve_csv<W: Write>(rows: &[ValueRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "b,v_riskfree,v_honest,v_forward,v_skorokhod")?;
    for row in rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            fmt_sig(row.b),
            fmt_sig(row.riskfree),
            fmt_sig(row.honest),
            fmt_sig(row.forward),
            fmt_sig(row.skorokhod)
        )?;
    }
    Ok(())
}
