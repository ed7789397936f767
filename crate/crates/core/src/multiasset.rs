//! Multi-asset insider portfolios (bridge/forward and Skorokhod schemes),
//! partial insider information, and a projected-gradient maximizer used as
//! an independent oracle for the closed forms.
//!
//! Conventions: `pi` is a row vector of asset weights, `sigma` is the
//! `d x d` volatility matrix with row `i` loading asset `i` on the `d`
//! driving Brownian motions, and `u = sigma' pi'` is the portfolio's exposure
//! to those drivers. The per-unit-time objective is
//!
//! ```text
//! J(pi) = r + pi (mu - r 1) + u . b_I / T - 1/2 sum_{j in Q} u_j^2
//! ```
//!
//! where `b_I` is the signal restricted to the insider drivers and `Q` is
//! every driver for the bridge/forward scheme but only the non-insider
//! drivers for the Skorokhod scheme (its quadratic term cancels on the
//! drivers the insider knows).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest accepted condition number of `sigma`.
pub const MAX_CONDITION: f64 = 1e10;

#[derive(Debug, Error, PartialEq)]
pub enum MultiAssetError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid parameter: {0}")]
    Invalid(String),
    #[error("volatility matrix is singular or ill-conditioned (condition number {0:e})")]
    IllConditioned(f64),
    #[error("non-insider block of sigma is singular")]
    SingularBlock,
    #[error("Skorokhod objective is affine in the insider weights; it needs a bounded constraint")]
    Unbounded,
    #[error("maximizer stopped after {iterations} iterations with residual {residual:e}")]
    NotConverged { iterations: usize, residual: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    BridgeOrForward,
    Skorokhod,
}

/// Feasible set handed to the numeric maximizer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleConstraint {
    Unconstrained,
    /// `[0, 1]^d`
    Box,
    /// `[0, 1]^d` and `sum pi <= 1`
    BoxSimplex,
    /// `[0, 1]` on insider assets, free elsewhere.
    InsiderBox,
}

/// Parameter file layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiAssetFile {
    pub mu: Vec<f64>,
    pub r: f64,
    pub sigma: Vec<Vec<f64>>,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub b: Vec<f64>,
    #[serde(default)]
    pub mask: Option<Vec<bool>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MultiAssetParams {
    mu: DVector<f64>,
    r: f64,
    sigma: DMatrix<f64>,
    horizon: f64,
    b: DVector<f64>,
    mask: Vec<bool>,
    condition: f64,
}

impl MultiAssetParams {
    pub fn new(
        mu: Vec<f64>,
        r: f64,
        sigma: DMatrix<f64>,
        horizon: f64,
        b: Vec<f64>,
        mask: Vec<bool>,
    ) -> Result<Self, MultiAssetError> {
        let d = mu.len();
        if d == 0 {
            return Err(MultiAssetError::Dimension("need at least one asset".into()));
        }
        if sigma.nrows() != d || sigma.ncols() != d || b.len() != d || mask.len() != d {
            return Err(MultiAssetError::Dimension(format!(
                "mu has {d} entries, sigma is {}x{}, b has {}, mask has {}",
                sigma.nrows(),
                sigma.ncols(),
                b.len(),
                mask.len()
            )));
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(MultiAssetError::Invalid(format!("T = {horizon}")));
        }
        if !r.is_finite() || mu.iter().chain(&b).chain(sigma.iter()).any(|x| !x.is_finite()) {
            return Err(MultiAssetError::Invalid("non-finite entry".into()));
        }
        let condition = condition_number(&sigma);
        // NaN fails too
        if condition.is_nan() || condition > MAX_CONDITION {
            return Err(MultiAssetError::IllConditioned(condition));
        }
        Ok(Self {
            mu: DVector::from_vec(mu),
            r,
            sigma,
            horizon,
            b: DVector::from_vec(b),
            mask,
            condition,
        })
    }

    pub fn from_file(f: MultiAssetFile) -> Result<Self, MultiAssetError> {
        let d = f.mu.len();
        if f.sigma.len() != d || f.sigma.iter().any(|row| row.len() != d) {
            return Err(MultiAssetError::Dimension(format!("sigma must be {d}x{d}")));
        }
        let sigma = DMatrix::from_fn(d, d, |i, j| f.sigma[i][j]);
        let mask = f.mask.unwrap_or_else(|| vec![true; d]);
        Self::new(f.mu, f.r, sigma, f.horizon, f.b, mask)
    }

    pub fn from_json(text: &str) -> Result<Self, MultiAssetError> {
        let f: MultiAssetFile =
            serde_json::from_str(text).map_err(|e| MultiAssetError::Invalid(format!("parameter JSON: {e}")))?;
        Self::from_file(f)
    }

    pub fn to_file(&self) -> MultiAssetFile {
        MultiAssetFile {
            mu: self.mu.iter().copied().collect(),
            r: self.r,
            sigma: self.sigma.row_iter().map(|row| row.iter().copied().collect()).collect(),
            horizon: self.horizon,
            b: self.b.iter().copied().collect(),
            mask: Some(self.mask.clone()),
        }
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn condition(&self) -> f64 {
        self.condition
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn with_mask(mut self, mask: Vec<bool>) -> Result<Self, MultiAssetError> {
        if mask.len() != self.dim() {
            return Err(MultiAssetError::Dimension("mask length".into()));
        }
        self.mask = mask;
        Ok(self)
    }

    fn excess(&self) -> DVector<f64> {
        self.mu.map(|m| m - self.r)
    }

    /// Signal with non-insider entries set to zero.
    fn masked_b(&self) -> DVector<f64> {
        DVector::from_fn(self.dim(), |i, _| if self.mask[i] { self.b[i] } else { 0.0 })
    }
}

fn condition_number(sigma: &DMatrix<f64>) -> f64 {
    let sv = sigma.clone().svd(false, false).singular_values;
    let max = sv.max();
    let min = sv.min();
    if min > 0.0 {
        max / min
    } else {
        f64::INFINITY
    }
}

/// Portfolio weights and whether they breach `[0,1]^d` with `sum <= 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PortfolioVector {
    pub pi: Vec<f64>,
    pub violates_no_short: bool,
}

impl PortfolioVector {
    fn new(pi: DVector<f64>) -> Self {
        let pi: Vec<f64> = pi.iter().copied().collect();
        let violates_no_short = pi.iter().any(|x| !(0.0..=1.0).contains(x)) || pi.iter().sum::<f64>() > 1.0 + 1e-12;
        Self { pi, violates_no_short }
    }
}

/// Which objective to evaluate.
#[derive(Clone, Copy, Debug)]
struct Objective<'a> {
    m: &'a MultiAssetParams,
    scheme: Scheme,
    /// Use the insider mask (partial information) or treat every asset as known.
    masked: bool,
}

impl Objective<'_> {
    fn known(&self, j: usize) -> bool {
        !self.masked || self.m.mask[j]
    }

    fn signal(&self) -> DVector<f64> {
        if self.masked {
            self.m.masked_b()
        } else {
            self.m.b.clone()
        }
    }

    /// Drivers that carry the `-u_j^2 / 2` penalty.
    fn penalized(&self, j: usize) -> bool {
        match self.scheme {
            Scheme::BridgeOrForward => true,
            Scheme::Skorokhod => !self.known(j),
        }
    }

    fn value(&self, pi: &DVector<f64>) -> f64 {
        let m = self.m;
        let u = m.sigma.tr_mul(pi);
        let b = self.signal();
        let penalty: f64 = (0..m.dim()).filter(|&j| self.penalized(j)).map(|j| u[j] * u[j]).sum();
        m.r + pi.dot(&m.excess()) + u.dot(&b) / m.horizon - 0.5 * penalty
    }

    fn gradient(&self, pi: &DVector<f64>) -> DVector<f64> {
        let m = self.m;
        let u = m.sigma.tr_mul(pi);
        let pen = DVector::from_fn(m.dim(), |j, _| if self.penalized(j) { u[j] } else { 0.0 });
        m.excess() + &m.sigma * (self.signal() / m.horizon - pen)
    }

    /// Hessian `-sigma P_Q sigma'`.
    fn curvature(&self) -> DMatrix<f64> {
        let m = self.m;
        let d = m.dim();
        let p = DMatrix::from_fn(d, d, |i, j| if i == j && self.penalized(i) { 1.0 } else { 0.0 });
        &m.sigma * p * m.sigma.transpose()
    }
}

/// Per-unit-time objective `J(pi)` for full (`masked = false`) or partial information.
pub fn objective(m: &MultiAssetParams, scheme: Scheme, masked: bool, pi: &[f64]) -> f64 {
    Objective { m, scheme, masked }.value(&DVector::from_column_slice(pi))
}

/// Gradient of [`objective`].
pub fn objective_gradient(m: &MultiAssetParams, scheme: Scheme, masked: bool, pi: &[f64]) -> Vec<f64> {
    Objective { m, scheme, masked }
        .gradient(&DVector::from_column_slice(pi))
        .iter()
        .copied()
        .collect()
}

fn solve(a: DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>, MultiAssetError> {
    a.lu().solve(rhs).ok_or(MultiAssetError::SingularBlock)
}

fn bridge_forward_pi(m: &MultiAssetParams, signal: &DVector<f64>) -> Result<DVector<f64>, MultiAssetError> {
    // pi' = (sigma sigma')^{-1} (mu - r1) + (sigma')^{-1} b / T
    let gram = &m.sigma * m.sigma.transpose();
    let excess_part = solve(gram, &m.excess())?;
    let signal_part = solve(m.sigma.transpose(), &(signal / m.horizon))?;
    Ok(excess_part + signal_part)
}

/// Full-information bridge/forward portfolio
/// `pi' = (mu - r1)'(sigma sigma')^{-1} + T^{-1} b' sigma^{-1}`.
/// The mask is ignored. The result is unconstrained; see `violates_no_short`.
pub fn mapo_pi_bridge_or_forward(m: &MultiAssetParams) -> Result<PortfolioVector, MultiAssetError> {
    Ok(PortfolioVector::new(bridge_forward_pi(m, &m.b)?))
}

fn skorokhod_indicator(m: &MultiAssetParams, signal: &DVector<f64>, i: usize) -> f64 {
    // sigma_i b > -(mu_i - r) T, tie to cash
    let load = m.sigma.row(i).transpose().dot(signal);
    if (m.mu[i] - m.r) * m.horizon + load > 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Full-information Skorokhod portfolio `pi_i = 1{sigma_i b > -(mu_i - r) T}`.
pub fn mapo_pi_skorokhod(m: &MultiAssetParams) -> PortfolioVector {
    let pi = DVector::from_fn(m.dim(), |i, _| skorokhod_indicator(m, &m.b, i));
    PortfolioVector::new(pi)
}

/// Value `T J(pi*)` of the full-information closed-form portfolio.
pub fn mapo_value(m: &MultiAssetParams, scheme: Scheme) -> Result<f64, MultiAssetError> {
    let pi = match scheme {
        Scheme::BridgeOrForward => bridge_forward_pi(m, &m.b)?,
        Scheme::Skorokhod => DVector::from_column_slice(&mapo_pi_skorokhod(m).pi),
    };
    let obj = Objective {
        m,
        scheme,
        masked: false,
    };
    Ok(m.horizon * obj.value(&pi))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartialInfoSolution {
    pub portfolio: PortfolioVector,
    pub value: f64,
    /// For the Skorokhod scheme: whether insider and non-insider blocks of
    /// `sigma` are decoupled, in which case the solution is the exact
    /// maximizer over insider weights in `[0, 1]`.
    pub block_separable: bool,
}

/// Partial insider information: the signal is used only for masked assets.
///
/// Bridge/forward: `pi' = (mu - r1)'(sigma sigma')^{-1} + I(b/T)' sigma^{-1}`.
/// Skorokhod: insider assets take the indicator on `sigma_i I(b)`; the
/// remaining weights solve the first-order conditions of `J` given those.
pub fn mapo_partial_info(m: &MultiAssetParams, scheme: Scheme) -> Result<PartialInfoSolution, MultiAssetError> {
    let obj = Objective {
        m,
        scheme,
        masked: true,
    };
    let signal = m.masked_b();
    let d = m.dim();
    let (pi, block_separable) = match scheme {
        Scheme::BridgeOrForward => (bridge_forward_pi(m, &signal)?, true),
        Scheme::Skorokhod => {
            let insiders: Vec<usize> = (0..d).filter(|&i| m.mask[i]).collect();
            let others: Vec<usize> = (0..d).filter(|&i| !m.mask[i]).collect();
            let mut pi = DVector::zeros(d);
            for &i in &insiders {
                pi[i] = skorokhod_indicator(m, &signal, i);
            }
            if !others.is_empty() {
                // Block of sigma: rows = non-insider assets, cols = non-insider drivers.
                let a = DMatrix::from_fn(others.len(), others.len(), |i, j| m.sigma[(others[i], others[j])]);
                // Gradient at pi with the non-insider weights at zero.
                let g0 = obj.gradient(&pi);
                let c = DVector::from_fn(others.len(), |i, _| g0[others[i]]);
                // g_N(pi) = g_N(pi0) - A A' pi_N
                let step = solve(&a * a.transpose(), &c)?;
                for (k, &i) in others.iter().enumerate() {
                    pi[i] = step[k];
                }
            }
            let separable = insiders
                .iter()
                .all(|&i| others.iter().all(|&j| m.sigma[(i, j)] == 0.0 && m.sigma[(j, i)] == 0.0));
            (pi, separable)
        }
    };
    let value = m.horizon * obj.value(&pi);
    Ok(PartialInfoSolution {
        portfolio: PortfolioVector::new(pi),
        value,
        block_separable,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleSettings {
    /// Stop once the projected-gradient residual is at most this.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for OracleSettings {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_iterations: 500_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub pi: Vec<f64>,
    pub objective: f64,
    pub residual: f64,
    pub iterations: usize,
}

fn project(v: &mut DVector<f64>, constraint: OracleConstraint, mask: &[bool]) {
    match constraint {
        OracleConstraint::Unconstrained => {}
        OracleConstraint::Box => v.apply(|x| *x = x.clamp(0.0, 1.0)),
        OracleConstraint::InsiderBox => {
            for (i, x) in v.iter_mut().enumerate() {
                if mask[i] {
                    *x = x.clamp(0.0, 1.0);
                }
            }
        }
        OracleConstraint::BoxSimplex => {
            let clipped_sum: f64 = v.iter().map(|x| x.clamp(0.0, 1.0)).sum();
            if clipped_sum <= 1.0 {
                v.apply(|x| *x = x.clamp(0.0, 1.0));
                return;
            }
            // sum clamp(v - tau, 0, 1) = 1 for some tau in (0, max v)
            let (mut lo, mut hi) = (0.0, v.max());
            for _ in 0..200 {
                let tau = 0.5 * (lo + hi);
                let s: f64 = v.iter().map(|x| (x - tau).clamp(0.0, 1.0)).sum();
                if s > 1.0 {
                    lo = tau;
                } else {
                    hi = tau;
                }
            }
            let tau = 0.5 * (lo + hi);
            v.apply(|x| *x = (*x - tau).clamp(0.0, 1.0));
        }
    }
}

/// Maximizes `J` by accelerated projected gradient ascent with adaptive restart.
///
/// Uses the mask of `m` when `masked` is true. Convergence is declared when
/// `||pi - P(pi + a grad J)|| / a` drops below the tolerance, with step
/// `a = 1 / lambda_max(sigma P_Q sigma')`.
pub fn numeric_maximize_j(
    m: &MultiAssetParams,
    scheme: Scheme,
    masked: bool,
    constraint: OracleConstraint,
    settings: OracleSettings,
) -> Result<OracleResult, MultiAssetError> {
    let obj = Objective { m, scheme, masked };
    let d = m.dim();
    let lipschitz = obj.curvature().symmetric_eigen().eigenvalues.max();
    let unbounded_directions = (0..d).any(|j| !obj.penalized(j));
    if unbounded_directions {
        let free_insider = match constraint {
            OracleConstraint::Unconstrained => true,
            OracleConstraint::InsiderBox => !masked && scheme == Scheme::Skorokhod,
            _ => false,
        };
        if free_insider {
            return Err(MultiAssetError::Unbounded);
        }
    }
    let step = if lipschitz > 1e-300 { 1.0 / lipschitz } else { 1e12 };
    let mask = if masked { m.mask.clone() } else { vec![true; d] };

    let mut x = DVector::zeros(d);
    project(&mut x, constraint, &mask);
    let mut y = x.clone();
    let mut momentum = 1.0f64;
    for iteration in 1..=settings.max_iterations {
        let mut next = &y + obj.gradient(&y) * step;
        project(&mut next, constraint, &mask);
        // gradient restart: drop momentum when it points against the step
        if (&y - &next).dot(&(&next - &x)) > 0.0 {
            momentum = 1.0;
        }
        let momentum_next = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
        y = &next + (&next - &x) * ((momentum - 1.0) / momentum_next);
        x = next;
        momentum = momentum_next;

        let mut probe = &x + obj.gradient(&x) * step;
        project(&mut probe, constraint, &mask);
        let residual = (&x - probe).norm() / step;
        if residual <= settings.tolerance {
            return Ok(OracleResult {
                pi: x.iter().copied().collect(),
                objective: obj.value(&x),
                residual,
                iterations: iteration,
            });
        }
    }
    let mut probe = &x + obj.gradient(&x) * step;
    project(&mut probe, constraint, &mask);
    Err(MultiAssetError::NotConverged {
        iterations: settings.max_iterations,
        residual: (&x - probe).norm() / step,
    })
}

/// Skorokhod versus bridge/forward value on one instance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueComparison {
    pub skorokhod: f64,
    pub bridge_or_forward: f64,
    pub riskfree: f64,
    /// Some asset satisfies `sigma_i b > -(mu_i - r) T`.
    pub premise_holds: bool,
    pub skorokhod_wins: bool,
}

pub fn compare_values(m: &MultiAssetParams) -> Result<ValueComparison, MultiAssetError> {
    let skorokhod = mapo_value(m, Scheme::Skorokhod)?;
    let bridge_or_forward = mapo_value(m, Scheme::BridgeOrForward)?;
    let premise_holds = mapo_pi_skorokhod(m).pi.contains(&1.0);
    Ok(ValueComparison {
        skorokhod,
        bridge_or_forward,
        riskfree: m.r * m.horizon,
        premise_holds,
        skorokhod_wins: skorokhod > bridge_or_forward,
    })
}
