//! Coverage, rate and QoE evaluation for power-domain NOMA multicast in a
//! two-tier (macro + small cell) heterogeneous network.
//!
//! Two independent evaluators live side by side:
//!
//! - [`simulator`]: Monte Carlo over Poisson deployments with LOS/NLOS
//!   blockage, Nakagami-m fading, range-expansion association and one-shot
//!   successive interference cancellation.
//! - [`analytic`]: numerical evaluation of the stochastic-geometry coverage
//!   expressions by nested adaptive quadrature.
//!
//! [`metrics`] turns coverage into average rate and MOS, including the OMA
//! baseline, and [`experiment`] drives parameter sweeps and figure runs that
//! write CSV tables.
//!
//! The low-level numerics ([`quadrature`], [`channel`], the MOS curve) are
//! generic over the floating-point type; the aliases below pin them to `f64`,
//! which is what the evaluators use.

pub mod analytic;
pub mod channel;
pub mod config;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod quadrature;
pub mod scalar;
pub mod simulator;
pub mod stats;

pub use config::{NetworkConfig, NomaConfig, TierParams};
pub use error::{Error, Result};
pub use scalar::Scalar;

/// Working precision of the simulator and the analytic evaluator.
pub type Real = f64;

pub type QuadratureSpec = quadrature::QuadratureSpec<Real>;
pub type Integral = quadrature::Integral<Real>;
pub type MosCurve = metrics::MosCurve<Real>;
