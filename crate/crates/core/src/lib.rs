//! Log-utility portfolio optimization for an insider who knows the terminal
//! value of the driving Brownian motion.
//!
//! Three ways of integrating against the anticipating driving process are
//! compared: the Brownian-bridge (Itô) representation, the Russo–Vallois
//! forward integral and the Skorokhod integral. The crate provides the
//! closed-form portfolios and values for each, quadrature and Monte Carlo
//! oracles for them, a multi-asset extension and a daily backtest.

pub mod exec;
pub mod experiments;
pub mod format;
pub mod market_data;
pub mod multiasset;
pub mod paths;
#[allow(clippy::excessive_precision)]
pub mod quadrature;
pub mod rng;
#[allow(clippy::excessive_precision)]
pub mod special;
pub mod strategies;
pub mod valuation;
pub mod wealth;

pub use exec::Execution;
pub use paths::{BridgeSpec, SamplePath, TimeGrid};
pub use strategies::{Constraint, MarketParams, ParamCurves, StrategyKind, StrategySpec};
