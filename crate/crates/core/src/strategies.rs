//! Optimal portfolio fractions for the honest trader and the three insider schemes.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::paths::TimeGrid;

#[derive(Debug, Error, PartialEq)]
pub enum StrategyError {
    #[error("invalid market parameters: {0}")]
    InvalidParams(String),
    #[error("adapted forward portfolio needs 0 <= t < T (t={t}, T={horizon})")]
    TimeOutOfRange { t: f64, horizon: f64 },
    #[error("the Skorokhod value is affine in the portfolio and has no optimum unless shorting is excluded")]
    SkorokhodNeedsNoShort,
    #[error("portfolio is undefined for zero volatility when shorting is allowed")]
    DegenerateVolatility,
    #[error("unknown strategy '{0}' (expected honest|bridge|forward-det|forward-adapted|skorokhod)")]
    UnknownStrategy(String),
    #[error("parameter curves are inconsistent: {0}")]
    InvalidCurves(String),
}

/// Constant-rate market: drift, risk-free rate, volatility, horizon.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarketParams {
    pub mu: f64,
    pub r: f64,
    pub sigma: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
}

impl MarketParams {
    /// `sigma = 0` is accepted as a degenerate (riskless) market.
    pub fn new(mu: f64, r: f64, sigma: f64, horizon: f64) -> Result<Self, StrategyError> {
        let p = Self { mu, r, sigma, horizon };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), StrategyError> {
        if !(self.mu.is_finite() && self.r.is_finite() && self.sigma.is_finite()) {
            return Err(StrategyError::InvalidParams("non-finite rate".into()));
        }
        if self.sigma < 0.0 {
            return Err(StrategyError::InvalidParams(format!("sigma = {} < 0", self.sigma)));
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(StrategyError::InvalidParams(format!("T = {} <= 0", self.horizon)));
        }
        Ok(())
    }

    /// Market price of risk `(mu - r) / sigma`; signed infinity when `sigma = 0`.
    pub fn theta(&self) -> f64 {
        let excess = self.mu - self.r;
        if self.sigma > 0.0 {
            excess / self.sigma
        } else if excess > 0.0 {
            f64::INFINITY
        } else if excess < 0.0 {
            f64::NEG_INFINITY
        } else {
            0.0
        }
    }

    pub fn is_degenerate(&self) -> bool {
        self.sigma == 0.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyKind {
    Honest,
    #[serde(rename = "bridge")]
    BridgeInsider,
    #[serde(rename = "forward-det")]
    ForwardDeterministic,
    ForwardAdapted,
    #[serde(rename = "skorokhod")]
    SkorokhodInsider,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 5] = [
        StrategyKind::Honest,
        StrategyKind::BridgeInsider,
        StrategyKind::ForwardDeterministic,
        StrategyKind::ForwardAdapted,
        StrategyKind::SkorokhodInsider,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            StrategyKind::Honest => "honest",
            StrategyKind::BridgeInsider => "bridge",
            StrategyKind::ForwardDeterministic => "forward-det",
            StrategyKind::ForwardAdapted => "forward-adapted",
            StrategyKind::SkorokhodInsider => "skorokhod",
        }
    }

    /// Whether the portfolio depends on the current driving-process value.
    pub fn is_adapted(&self) -> bool {
        matches!(self, StrategyKind::ForwardAdapted)
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StrategyKind {
    type Err = StrategyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| StrategyError::UnknownStrategy(s.to_string()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Constraint {
    AllowShort,
    NoShort,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrategySpec {
    kind: StrategyKind,
    constraint: Constraint,
}

impl StrategySpec {
    pub fn new(kind: StrategyKind, constraint: Constraint) -> Result<Self, StrategyError> {
        if kind == StrategyKind::SkorokhodInsider && constraint == Constraint::AllowShort {
            return Err(StrategyError::SkorokhodNeedsNoShort);
        }
        Ok(Self { kind, constraint })
    }

    pub fn no_short(kind: StrategyKind) -> Self {
        Self {
            kind,
            constraint: Constraint::NoShort,
        }
    }

    pub fn kind(&self) -> StrategyKind {
        self.kind
    }

    pub fn constraint(&self) -> Constraint {
        self.constraint
    }

    /// Portfolio at time `t` given the current driving value `driving_t`.
    ///
    /// Only the adapted forward strategy reads `t` and `driving_t`.
    pub fn portfolio(&self, p: &MarketParams, b: f64, t: f64, driving_t: f64) -> Result<f64, StrategyError> {
        match self.kind {
            StrategyKind::Honest => merton_pi(p, self.constraint),
            StrategyKind::BridgeInsider | StrategyKind::ForwardDeterministic => {
                bridge_or_forward_pi_det(p, b, self.constraint)
            }
            StrategyKind::ForwardAdapted => forward_pi_adapted(p, b, t, driving_t, self.constraint),
            StrategyKind::SkorokhodInsider => skorokhod_pi(p, b, self.constraint),
        }
    }
}

#[inline]
pub fn clamp_unit(pi: f64) -> f64 {
    pi.clamp(0.0, 1.0)
}

fn apply(constraint: Constraint, pi: f64) -> f64 {
    match constraint {
        Constraint::AllowShort => pi,
        Constraint::NoShort => clamp_unit(pi),
    }
}

/// Sign-limit of a clamped affine portfolio as `sigma -> 0`.
fn degenerate_limit(excess: f64, signal: f64, constraint: Constraint) -> Result<f64, StrategyError> {
    match constraint {
        Constraint::AllowShort => Err(StrategyError::DegenerateVolatility),
        Constraint::NoShort => {
            let lead = if excess != 0.0 { excess } else { signal };
            Ok(if lead > 0.0 { 1.0 } else { 0.0 })
        }
    }
}

/// Merton fraction `(mu - r) / sigma^2`.
pub fn merton_pi(p: &MarketParams, constraint: Constraint) -> Result<f64, StrategyError> {
    p.validate()?;
    if p.is_degenerate() {
        return degenerate_limit(p.mu - p.r, 0.0, constraint);
    }
    Ok(apply(constraint, (p.mu - p.r) / (p.sigma * p.sigma)))
}

/// Insider fraction with deterministic portfolio, identical for the bridge
/// and forward schemes: `(mu - r) / sigma^2 + b / (sigma T)`.
pub fn bridge_or_forward_pi_det(p: &MarketParams, b: f64, constraint: Constraint) -> Result<f64, StrategyError> {
    p.validate()?;
    if p.is_degenerate() {
        return degenerate_limit(p.mu - p.r, b, constraint);
    }
    let pi = (p.mu - p.r) / (p.sigma * p.sigma) + b / (p.sigma * p.horizon);
    Ok(apply(constraint, pi))
}

/// Adapted forward fraction `(mu - r) / sigma^2 + (b - B_t) / (sigma (T - t))`.
pub fn forward_pi_adapted(
    p: &MarketParams,
    b: f64,
    t: f64,
    driving_t: f64,
    constraint: Constraint,
) -> Result<f64, StrategyError> {
    p.validate()?;
    if !(t >= 0.0 && t < p.horizon) {
        return Err(StrategyError::TimeOutOfRange { t, horizon: p.horizon });
    }
    let gap = b - driving_t;
    if p.is_degenerate() {
        return degenerate_limit(p.mu - p.r, gap, constraint);
    }
    let pi = (p.mu - p.r) / (p.sigma * p.sigma) + gap / (p.sigma * (p.horizon - t));
    Ok(apply(constraint, pi))
}

/// Skorokhod insider under no shorting: fully invested iff `b > -theta T`.
///
/// At `sigma = 0` the condition becomes `mu > r`. The tie goes to the
/// risk-free asset.
pub fn skorokhod_pi(p: &MarketParams, b: f64, constraint: Constraint) -> Result<f64, StrategyError> {
    p.validate()?;
    if constraint == Constraint::AllowShort {
        return Err(StrategyError::SkorokhodNeedsNoShort);
    }
    Ok(if skorokhod_invests(p, b) { 1.0 } else { 0.0 })
}

#[inline]
pub(crate) fn skorokhod_invests(p: &MarketParams, b: f64) -> bool {
    if p.is_degenerate() {
        (p.mu - p.r) * p.horizon > 0.0
    } else {
        // same breakpoint expression as the forward value, so the two agree at the kink
        b > -p.theta() * p.horizon
    }
}

/// Deterministic time-dependent parameters sampled on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamCurves {
    grid: TimeGrid,
    mu: Vec<f64>,
    r: Vec<f64>,
    sigma: Vec<f64>,
}

impl ParamCurves {
    pub fn new(grid: TimeGrid, mu: Vec<f64>, r: Vec<f64>, sigma: Vec<f64>) -> Result<Self, StrategyError> {
        let n = grid.n_steps() + 1;
        if mu.len() != n || r.len() != n || sigma.len() != n {
            return Err(StrategyError::InvalidCurves(format!(
                "expected {n} samples per curve, got mu={}, r={}, sigma={}",
                mu.len(),
                r.len(),
                sigma.len()
            )));
        }
        if mu.iter().chain(&r).any(|x| !x.is_finite()) {
            return Err(StrategyError::InvalidCurves("non-finite drift or rate".into()));
        }
        if let Some(s) = sigma.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
            return Err(StrategyError::InvalidCurves(format!(
                "sigma sample {s} is not positive"
            )));
        }
        Ok(Self { grid, mu, r, sigma })
    }

    pub fn constant(p: &MarketParams, n_steps: usize) -> Result<Self, StrategyError> {
        let grid = TimeGrid::new(p.horizon, n_steps).map_err(|e| StrategyError::InvalidCurves(e.to_string()))?;
        let n = n_steps + 1;
        Self::new(grid, vec![p.mu; n], vec![p.r; n], vec![p.sigma; n])
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn r(&self) -> &[f64] {
        &self.r
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    /// Composite trapezoidal rule of `f(k)` over the grid.
    pub fn trapezoid(&self, f: impl Fn(usize) -> f64) -> f64 {
        let n = self.grid.n_steps();
        let inner: f64 = (1..n).map(&f).sum();
        self.grid.dt() * (0.5 * (f(0) + f(n)) + inner)
    }
}

/// Candidate Skorokhod portfolio for deterministic parameter curves.
#[derive(Clone, Debug, PartialEq)]
pub struct SkorokhodCurveSolution {
    pub pi: Vec<f64>,
    /// `int_0^T (r_t - mu_t) / sigma_t dt`, the only signal for which `pi` is optimal.
    pub b_required: f64,
    pub condition_met: bool,
}

/// Relative tolerance on the integral condition `b = int (r - mu) / sigma dt`.
pub const INTEGRAL_CONDITION_TOL: f64 = 1e-8;

pub fn skorokhod_pi_det_params(c: &ParamCurves, b: f64) -> SkorokhodCurveSolution {
    let big_t = c.grid.horizon();
    let pi = (0..=c.grid.n_steps())
        .map(|k| {
            let s = c.sigma[k];
            (c.mu[k] - c.r[k]) / (s * s) + b / (s * big_t)
        })
        .collect();
    let b_required = c.trapezoid(|k| (c.r[k] - c.mu[k]) / c.sigma[k]);
    let condition_met = (b - b_required).abs() <= INTEGRAL_CONDITION_TOL * b.abs().max(1.0);
    SkorokhodCurveSolution {
        pi,
        b_required,
        condition_met,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn section_params() -> MarketParams {
        MarketParams::new(0.03, 0.02, 0.3, 1.0).unwrap()
    }

    #[test]
    fn merton_examples() {
        let p = MarketParams::new(0.02, 0.02, 0.3, 1.0).unwrap();
        assert_eq!(merton_pi(&p, Constraint::AllowShort).unwrap(), 0.0);
        let pi = merton_pi(&section_params(), Constraint::AllowShort).unwrap();
        assert!((pi - 1.0 / 9.0).abs() < 1e-15);
        let hot = MarketParams::new(0.2, 0.02, 0.3, 1.0).unwrap();
        assert!((merton_pi(&hot, Constraint::AllowShort).unwrap() - 2.0).abs() < 1e-14);
        assert_eq!(merton_pi(&hot, Constraint::NoShort).unwrap(), 1.0);
    }

    #[test]
    fn deterministic_insider_examples() {
        let p = section_params();
        let base = merton_pi(&p, Constraint::AllowShort).unwrap();
        assert_eq!(bridge_or_forward_pi_det(&p, 0.0, Constraint::AllowShort).unwrap(), base);
        let pi = bridge_or_forward_pi_det(&p, 0.5, Constraint::AllowShort).unwrap();
        assert!((pi - (1.0 / 9.0 + 0.5 / 0.3)).abs() < 1e-14);
        assert!((pi - 1.777_777_777_777_778).abs() < 1e-12);
        assert_eq!(bridge_or_forward_pi_det(&p, 0.5, Constraint::NoShort).unwrap(), 1.0);
        let root = -(p.mu - p.r) * p.horizon / p.sigma;
        assert!(
            bridge_or_forward_pi_det(&p, root, Constraint::AllowShort)
                .unwrap()
                .abs()
                < 1e-15
        );
    }

    #[test]
    fn adapted_examples() {
        let p = section_params();
        let base = merton_pi(&p, Constraint::AllowShort).unwrap();
        assert_eq!(
            forward_pi_adapted(&p, 0.5, 0.4, 0.5, Constraint::AllowShort).unwrap(),
            base
        );
        let pi = forward_pi_adapted(&p, 0.5, 0.5, 0.1, Constraint::AllowShort).unwrap();
        assert!((pi - 2.777_777_777_777_778).abs() < 1e-12);
        assert!(matches!(
            forward_pi_adapted(&p, 0.5, 1.0, 0.1, Constraint::AllowShort),
            Err(StrategyError::TimeOutOfRange { .. })
        ));
    }

    #[test]
    fn skorokhod_indicator() {
        let p = section_params();
        assert_eq!(skorokhod_pi(&p, 0.5, Constraint::NoShort).unwrap(), 1.0);
        assert_eq!(skorokhod_pi(&p, -0.1, Constraint::NoShort).unwrap(), 0.0);
        // (mu - r) T + sigma b = 0.25 - 0.25 = 0 exactly: the tie goes to cash.
        let tied = MarketParams::new(0.5, 0.25, 0.5, 1.0).unwrap();
        assert_eq!(skorokhod_pi(&tied, -0.5, Constraint::NoShort).unwrap(), 0.0);
        assert_eq!(
            skorokhod_pi(&p, 0.5, Constraint::AllowShort),
            Err(StrategyError::SkorokhodNeedsNoShort)
        );
        assert!(StrategySpec::new(StrategyKind::SkorokhodInsider, Constraint::AllowShort).is_err());
    }

    #[test]
    fn degenerate_volatility() {
        let p = MarketParams::new(0.03, 0.02, 0.0, 1.0).unwrap();
        assert_eq!(merton_pi(&p, Constraint::NoShort).unwrap(), 1.0);
        assert_eq!(
            merton_pi(&p, Constraint::AllowShort),
            Err(StrategyError::DegenerateVolatility)
        );
        assert_eq!(skorokhod_pi(&p, -5.0, Constraint::NoShort).unwrap(), 1.0);
        assert!(MarketParams::new(0.03, 0.02, -0.1, 1.0).is_err());
    }

    #[test]
    fn names_round_trip() {
        for k in StrategyKind::ALL {
            assert_eq!(k.name().parse::<StrategyKind>().unwrap(), k);
        }
        assert!("merton".parse::<StrategyKind>().is_err());
    }

    #[test]
    fn curve_examples() {
        let flat = MarketParams::new(0.02, 0.02, 0.3, 1.0).unwrap();
        let sol = skorokhod_pi_det_params(&ParamCurves::constant(&flat, 50).unwrap(), 0.0);
        assert_eq!(sol.b_required, 0.0);
        assert!(sol.condition_met);
        assert!(sol.pi.iter().all(|&x| x == 0.0));

        let sol = skorokhod_pi_det_params(&ParamCurves::constant(&section_params(), 50).unwrap(), 0.5);
        assert!((sol.b_required + 1.0 / 30.0).abs() < 1e-14);
        assert!(!sol.condition_met);

        // mu_t = r_t + 0.03 sigma_t with varying sigma: b_required = -0.03 T.
        let grid = TimeGrid::new(2.0, 200).unwrap();
        let sigma: Vec<f64> = grid.times().iter().map(|t| 0.2 + 0.1 * (3.0 * t).sin().abs()).collect();
        let r: Vec<f64> = grid.times().iter().map(|t| 0.01 + 0.005 * t).collect();
        let mu: Vec<f64> = r.iter().zip(&sigma).map(|(r, s)| r + 0.03 * s).collect();
        let c = ParamCurves::new(grid, mu, r, sigma).unwrap();
        let sol = skorokhod_pi_det_params(&c, -0.06);
        assert!((sol.b_required + 0.06).abs() < 1e-14);
        assert!(sol.condition_met);
    }

    #[test]
    fn curve_validation() {
        let grid = TimeGrid::new(1.0, 2).unwrap();
        assert!(ParamCurves::new(grid, vec![0.0; 3], vec![0.0; 3], vec![0.1, 0.0, 0.1]).is_err());
        assert!(ParamCurves::new(grid, vec![0.0; 2], vec![0.0; 3], vec![0.1; 3]).is_err());
    }

    fn objective(p: &MarketParams, b: f64, pi: f64) -> f64 {
        p.r + (p.mu - p.r) * pi + pi * p.sigma * b / p.horizon - 0.5 * p.sigma * p.sigma * pi * pi
    }

    proptest! {
        #[test]
        fn deterministic_matches_adapted_at_origin(
            mu in -0.5f64..0.5, r in -0.1f64..0.2, sigma in 0.01f64..2.0,
            big_t in 0.1f64..10.0, b in -5.0f64..5.0,
        ) {
            let p = MarketParams::new(mu, r, sigma, big_t).unwrap();
            for c in [Constraint::AllowShort, Constraint::NoShort] {
                prop_assert_eq!(
                    bridge_or_forward_pi_det(&p, b, c).unwrap(),
                    forward_pi_adapted(&p, b, 0.0, 0.0, c).unwrap()
                );
            }
        }

        #[test]
        fn no_short_is_projection(
            mu in -0.5f64..0.5, r in -0.1f64..0.2, sigma in 0.01f64..2.0,
            big_t in 0.1f64..10.0, b in -5.0f64..5.0, t_frac in 0.0f64..0.99, bt in -3.0f64..3.0,
        ) {
            let p = MarketParams::new(mu, r, sigma, big_t).unwrap();
            let t = t_frac * big_t;
            for kind in [StrategyKind::Honest, StrategyKind::ForwardDeterministic, StrategyKind::ForwardAdapted] {
                let free = StrategySpec::new(kind, Constraint::AllowShort).unwrap().portfolio(&p, b, t, bt).unwrap();
                let boxed = StrategySpec::no_short(kind).portfolio(&p, b, t, bt).unwrap();
                prop_assert_eq!(boxed, free.clamp(0.0, 1.0));
            }
        }

        #[test]
        fn first_order_condition(
            mu in -0.5f64..0.5, r in -0.1f64..0.2, sigma in 0.1f64..2.0,
            big_t in 0.5f64..4.0, b in -2.0f64..2.0,
        ) {
            let p = MarketParams::new(mu, r, sigma, big_t).unwrap();
            let pi = bridge_or_forward_pi_det(&p, b, Constraint::AllowShort).unwrap();
            let h = 1e-5;
            let d = (objective(&p, b, pi + h) - objective(&p, b, pi - h)) / (2.0 * h);
            prop_assert!(d.abs() < 1e-8, "derivative {}", d);
        }
    }
}
