//! Core library for valuing inside information in complete-market models.
//!
//! The crate simulates three worked markets (a geometric Brownian market with
//! a binary signal, a two-asset Poisson market whose signal is the terminal
//! count difference, and a Brownian market whose signal is a function of the
//! running maximum), evaluates the conditional density process of the signal,
//! diagnoses arbitrage introduced by the extra information, solves leveraged
//! optimal consumption-investment by duality, and computes utility
//! indifference values together with universal bounds and replication checks.
//!
//! Modules are layered bottom-up: `numerics` and `rng` are dependency-free
//! primitives, `mcsim` produces paths, `densities` evaluates conditional
//! densities on those paths, and `diagnostics`, `dualopt`, `valuation`,
//! `replication` consume both. `battery` bundles the acceptance checks used
//! by the CLI `suite` task and the integration tests.

pub mod battery;
pub mod densities;
pub mod diagnostics;
pub mod dualopt;
pub mod mcsim;
pub mod numerics;
pub mod replication;
pub mod rng;
pub mod valuation;

/// Error type shared by all modules.
#[derive(Debug, thiserror::Error)]
pub enum CoreError {
    /// A constructor or operation received parameters outside its domain
    /// of validity (nonpositive capital, probabilities not summing to one,
    /// malformed grids, ...).
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    /// An evaluation was requested outside the supported domain
    /// (time outside `[0, T]`, unknown signal atom, ...).
    #[error("domain error: {0}")]
    Domain(String),
    /// An iterative solver failed: no sign change after bracket expansion,
    /// a non-monotone Monte Carlo objective beyond noise, or divergence.
    #[error("solver failure: {0}")]
    Solver(String),
    /// A computed quantity violated an internal consistency bound that holds
    /// with probability one in exact arithmetic (for example a supermartingale
    /// mean significantly above its initial value).
    #[error("internal consistency violation: {0}")]
    Inconsistent(String),
    /// The requested operation does not apply to the supplied model
    /// (universal value with a non-constant terminal density, bounds for an
    /// unbounded density, closed forms for a continuous signal, ...).
    #[error("not applicable: {0}")]
    Inapplicable(String),
}

pub type Result<T> = std::result::Result<T, CoreError>;
