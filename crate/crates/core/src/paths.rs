//! Brownian and generalized Brownian-bridge paths on a uniform grid.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::format::fmt_sig;
use crate::rng::NormalSource;

#[derive(Debug, Error, PartialEq)]
pub enum PathError {
    #[error("invalid time grid: horizon {horizon}, steps {n_steps}")]
    InvalidGrid { horizon: f64, n_steps: usize },
    #[error("invalid bridge: terminal {terminal}, horizon {horizon}")]
    InvalidBridge { terminal: f64, horizon: f64 },
    #[error("horizon mismatch: path ends at {path}, bridge at {bridge}")]
    HorizonMismatch { path: f64, bridge: f64 },
    #[error("grid horizon {grid} exceeds bridge horizon {bridge}")]
    GridBeyondBridge { grid: f64, bridge: f64 },
    #[error("time arguments out of range: s={s}, t={t}, horizon={horizon}")]
    OutOfRange { s: f64, t: f64, horizon: f64 },
    #[error("path has {got} values, grid needs {expected}")]
    LengthMismatch { got: usize, expected: usize },
}

/// Uniform discretization `t_k = k T / n` of `[0, T]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    horizon: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, n_steps: usize) -> Result<Self, PathError> {
        if !(horizon.is_finite() && horizon > 0.0) || n_steps == 0 {
            return Err(PathError::InvalidGrid { horizon, n_steps });
        }
        Ok(Self { horizon, n_steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.n_steps as f64
    }

    /// Grid point `k`; exact at both ends.
    #[inline]
    pub fn time(&self, k: usize) -> f64 {
        if k == self.n_steps {
            self.horizon
        } else {
            self.horizon * k as f64 / self.n_steps as f64
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.n_steps).map(|k| self.time(k)).collect()
    }
}

/// Real-valued path sampled on every grid point.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplePath {
    grid: TimeGrid,
    values: Vec<f64>,
}

impl SamplePath {
    pub fn new(grid: TimeGrid, values: Vec<f64>) -> Result<Self, PathError> {
        if values.len() != grid.n_steps + 1 {
            return Err(PathError::LengthMismatch {
                got: values.len(),
                expected: grid.n_steps + 1,
            });
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn terminal(&self) -> f64 {
        self.values[self.grid.n_steps]
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// CSV with header `t,value`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "t,value")?;
        for (k, v) in self.values.iter().enumerate() {
            writeln!(out, "{},{}", fmt_sig(self.grid.time(k)), fmt_sig(*v))?;
        }
        Ok(())
    }
}

/// Brownian motion conditioned on `B_0 = 0`, `B_T = b`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BridgeSpec {
    terminal: f64,
    horizon: f64,
}

impl BridgeSpec {
    pub fn new(terminal: f64, horizon: f64) -> Result<Self, PathError> {
        if !terminal.is_finite() || !(horizon.is_finite() && horizon > 0.0) {
            return Err(PathError::InvalidBridge { terminal, horizon });
        }
        Ok(Self { terminal, horizon })
    }

    pub fn terminal(&self) -> f64 {
        self.terminal
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }
}

/// Standard Brownian motion from independent `N(0, dt)` increments.
pub fn sample_brownian<R: NormalSource>(grid: TimeGrid, rng: &mut R) -> SamplePath {
    let sd = grid.dt().sqrt();
    let mut values = Vec::with_capacity(grid.n_steps + 1);
    let mut w = 0.0;
    values.push(w);
    for _ in 0..grid.n_steps {
        w += sd * rng.next_normal();
        values.push(w);
    }
    SamplePath { grid, values }
}

/// Pins a Brownian path at `b`: `B_t = W_t - (W_T - b) t / T`.
pub fn bridge_from_brownian(w: &SamplePath, spec: &BridgeSpec) -> Result<SamplePath, PathError> {
    let horizon = w.grid.horizon;
    if horizon != spec.horizon {
        return Err(PathError::HorizonMismatch {
            path: horizon,
            bridge: spec.horizon,
        });
    }
    let gap = w.terminal() - spec.terminal;
    let n = w.grid.n_steps;
    let mut values: Vec<f64> = w
        .values
        .iter()
        .enumerate()
        .map(|(k, &wk)| wk - gap * (w.grid.time(k) / horizon))
        .collect();
    values[0] = 0.0;
    values[n] = spec.terminal;
    Ok(SamplePath { grid: w.grid, values })
}

/// Left-to-right conditional sampling of the bridge.
///
/// Point `s` is drawn from the Gaussian law of `B(s)` given the previous
/// grid value `B(u)` and the pinned terminal value `B(T) = b`. The grid may
/// stop short of the bridge horizon; a grid that reaches it ends exactly at
/// `b`.
pub fn sample_bridge_sequential<R: NormalSource>(
    spec: &BridgeSpec,
    grid: TimeGrid,
    rng: &mut R,
) -> Result<SamplePath, PathError> {
    let big_t = spec.horizon;
    if grid.horizon > big_t {
        return Err(PathError::GridBeyondBridge {
            grid: grid.horizon,
            bridge: big_t,
        });
    }
    let b = spec.terminal;
    let mut values = Vec::with_capacity(grid.n_steps + 1);
    let mut prev = 0.0;
    let mut u = 0.0;
    values.push(prev);
    for k in 1..=grid.n_steps {
        let s = grid.time(k);
        let next = if s >= big_t {
            b
        } else {
            let span = big_t - u;
            let mean = ((big_t - s) * prev + (s - u) * b) / span;
            let var = (s - u) * (big_t - s) / span;
            mean + var.sqrt() * rng.next_normal()
        };
        values.push(next);
        prev = next;
        u = s;
    }
    Ok(SamplePath { grid, values })
}

/// `E[B_t] = b t / T`.
pub fn bridge_mean(t: f64, spec: &BridgeSpec) -> Result<f64, PathError> {
    if !(0.0..=spec.horizon).contains(&t) {
        return Err(PathError::OutOfRange {
            s: t,
            t,
            horizon: spec.horizon,
        });
    }
    Ok(spec.terminal * t / spec.horizon)
}

/// `Cov(B_s, B_t) = s (1 - t/T)` for `s <= t`.
pub fn bridge_cov(s: f64, t: f64, spec: &BridgeSpec) -> Result<f64, PathError> {
    if !(0.0 <= s && s <= t && t <= spec.horizon) {
        return Err(PathError::OutOfRange {
            s,
            t,
            horizon: spec.horizon,
        });
    }
    Ok(s * (1.0 - t / spec.horizon))
}
