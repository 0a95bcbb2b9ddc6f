//! Coverage-driven energy demand and alpha-fair supplier allocation for
//! cellular networks powered by a multi-supplier smart grid.
//!
//! The crate is organised bottom-up:
//!
//! * [`geometry`] computes coverage probability for a Poisson network with
//!   hard-core interferers and inverts it for the transmit power that meets a
//!   QoS target.
//! * [`spatial`] is a Monte Carlo simulator that checks the analytic coverage.
//! * [`power`] turns per-user transmit power into operator energy demand.
//! * [`market`] holds supplier pricing, emissions and profit.
//! * [`drm`] solves the emissions-constrained alpha-fair allocation problem by
//!   closed forms, dual subgradient and exhaustive search.
//! * [`scenario`] loads configurations, runs sweeps and writes CSV/SVG output.

pub mod drm;
pub mod error;
pub mod geometry;
pub mod market;
pub mod power;
pub mod quadrature;
pub mod scenario;
pub mod spatial;
pub mod units;

pub use error::{Error, Result};
