//! Numerical engine for spouse's pension valuation.
//!
//! A spouse's pension pays the surviving spouse after the death of the
//! insured, contingent on the insured being married at death. Valuing such a
//! policy needs two marital quantities that no plain Markov chain provides:
//! the probability `g(t)` that the insured is married at time `t`, and the
//! conditional density `f(y|t)` of the spouse's age given marriage. This
//! crate computes both by solving the layer recursion of a marked point
//! process over marriage, divorce and spouse death (with optional longevity
//! improvement in the spouse mortality surface), then assembles cashflows
//! `a(t)`, expected cumulative payments `A(t)` and the discounted liability
//! `L` for lifelong annuities, terminating annuities and lump-sum-at-age
//! policies.
//!
//! Every analytic quantity has an independent Monte Carlo counterpart in
//! [`simulator`], which simulates the marked point process path by path and
//! estimates `g`, `f`, stopping-time densities and policy values with
//! standard errors. The [`g82`] module reproduces the age-parameterized
//! special case (no longevity, marriage age floor) through a separate code
//! path as a cross-implementation check.
//!
//! The `pension-engine` binary is a batch front-end over a TOML scenario
//! config; see [`cli`] and the repository README.

pub mod cli;
pub mod config;
pub mod error;
pub mod g82;
pub mod grid;
pub mod intensity;
pub mod marital;
pub mod payments;
pub mod quadrature;
pub mod report;
pub mod simulator;
pub mod survival;
pub mod valuation;

pub use error::{EngineError, Result};
pub use grid::GridSpec;
pub use intensity::{
    AgeAtMarriageDensity, DeathDensity, ImprovementFactor, IntensityCurve, IntensitySet,
    MortalitySurface,
};
pub use marital::{solve_marital, MaritalSolution, SolverOptions};
pub use payments::{PolicyKind, PolicySpec};
pub use simulator::Simulator;
pub use valuation::{cashflow, liability, CashflowCurve, ShortRate};
