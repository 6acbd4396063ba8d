//! Payment functions for the three supported policy types.
//!
//! A policy pays the surviving spouse from the insured's death at time `u`
//! onward, with the spouse's post-death health following the two-state
//! alive/dead chain with intensity `r ↦ q_ad(r, y + r - u)` for a spouse aged
//! `y` at `u`. What valuation needs from a policy is the derivative of its
//! expected cumulative payment in `t`:
//!
//! - lifelong annuity: `amount · P(spouse alive at t)`;
//! - terminating annuity: the same gated by `y + t - u ≤ c`;
//! - lump sum at age `c`: an absolutely continuous deferred part (spouses
//!   reaching age `c` at `t`) plus an immediate payment at death for spouses
//!   already aged `c` or more, handled by [`lump_sum_components`].

use serde::{Deserialize, Serialize};

use crate::error::{EngineError, Result};
use crate::grid::GridSpec;
use crate::intensity::MortalitySurface;
use crate::quadrature::trapezoid_range;
use crate::survival::spouse_survival;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PolicyKind {
    /// Annuity paid while the spouse lives (G82 reward 810).
    LifelongAnnuity,
    /// Annuity paid while the spouse lives and is at most `termination_age`
    /// (G82 reward 815).
    TerminatingAnnuity { termination_age: f64 },
    /// One payment when the spouse reaches `trigger_age`, immediately at the
    /// insured's death if already past it.
    LumpSumAtAge { trigger_age: f64 },
}

impl PolicyKind {
    fn name(&self) -> &'static str {
        match self {
            Self::LifelongAnnuity => "lifelong annuity",
            Self::TerminatingAnnuity { .. } => "terminating annuity",
            Self::LumpSumAtAge { .. } => "lump sum at age",
        }
    }
}

/// A concrete spouse's pension policy.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicySpec {
    pub kind: PolicyKind,
    /// Money per year for annuities, money for lump sums.
    pub amount: f64,
    /// Spouse mortality after the insured's death. Defaults to the marital
    /// model's spouse surface unless a scenario overrides it.
    pub q_ad: MortalitySurface,
}

impl PolicySpec {
    pub fn new(kind: PolicyKind, amount: f64, q_ad: MortalitySurface) -> Result<Self> {
        if !(amount > 0.0) || !amount.is_finite() {
            return Err(EngineError::Validation(format!(
                "policy amount must be positive and finite, got {amount}"
            )));
        }
        match kind {
            PolicyKind::TerminatingAnnuity { termination_age: c }
            | PolicyKind::LumpSumAtAge { trigger_age: c } => {
                if !(c >= 0.0) || !c.is_finite() {
                    return Err(EngineError::Validation(format!(
                        "policy age threshold must be nonnegative, got {c}"
                    )));
                }
            }
            PolicyKind::LifelongAnnuity => {}
        }
        Ok(Self { kind, amount, q_ad })
    }
}

/// Rate of expected payments at time `t ≥ u` for an annuity policy, given
/// death at `u` with spouse aged `y` at `u`:
///
/// ```text
/// amount · exp(-∫_u^t q_ad(r, y + r - u) dr) · [1_{y + t - u ≤ c}]
/// ```
///
/// Lump-sum policies have no payment rate derivable from survival alone; use
/// [`lump_sum_components`] for them.
pub fn payment_rate_derivative(policy: &PolicySpec, u: f64, y: f64, t: f64) -> Result<f64> {
    if u < 0.0 || t < u {
        return Err(EngineError::InvalidArgument(format!(
            "need t >= u >= 0, got u = {u}, t = {t}"
        )));
    }
    if y < 0.0 {
        return Err(EngineError::InvalidArgument(format!(
            "spouse age must be nonnegative, got {y}"
        )));
    }
    let survival = || -> Result<f64> {
        Ok(spouse_survival(&policy.q_ad, u, t, y + t - u)?.value())
    };
    match policy.kind {
        PolicyKind::LifelongAnnuity => Ok(policy.amount * survival()?),
        PolicyKind::TerminatingAnnuity { termination_age } => {
            if y + t - u <= termination_age {
                Ok(policy.amount * survival()?)
            } else {
                Ok(0.0)
            }
        }
        PolicyKind::LumpSumAtAge { .. } => Err(EngineError::UnsupportedPolicy(
            PolicyKind::LumpSumAtAge { trigger_age: 0.0 }.name(),
        )),
    }
}

/// The two pieces of a lump-sum-at-age policy for death time `u` and spouse
/// age density `f_u` (sampled on the grid's age nodes):
///
/// - a deferred payment rate at `t ≥ u`, from spouses who reach the trigger
///   age exactly at `t` (they were `c + u - t` at death and must survive from
///   `u` to `t`);
/// - an immediate payment at death itself, worth the mass of `f_u` at or
///   above the trigger age (evaluated at `t = u`).
pub fn lump_sum_components(
    policy: &PolicySpec,
    u: f64,
    f_u: &[f64],
    grid: &GridSpec,
    t: f64,
) -> Result<(f64, f64)> {
    let PolicyKind::LumpSumAtAge { trigger_age: c } = policy.kind else {
        return Err(EngineError::UnsupportedPolicy(policy.kind.name()));
    };
    if t < u {
        return Err(EngineError::InvalidArgument(format!(
            "need t >= u, got u = {u}, t = {t}"
        )));
    }
    if f_u.len() != grid.n_y() {
        return Err(EngineError::GridMismatch(format!(
            "density has {} nodes, the grid has {}",
            f_u.len(),
            grid.n_y()
        )));
    }

    let deferred = {
        let age_at_death = c + u - t;
        if age_at_death < 0.0 || age_at_death > grid.y_max() {
            0.0
        } else {
            let (j, w) = grid.locate(age_at_death, grid.y_max(), grid.n_y())?;
            let density = f_u[j] + w * (f_u[j + 1] - f_u[j]);
            // Survivor reaches age c at time t.
            density * spouse_survival(&policy.q_ad, u, t, c)?.value() * policy.amount
        }
    };

    let immediate = {
        if c > grid.y_max() {
            0.0
        } else {
            // Tolerant ceil so a lattice-valued trigger age keeps its node.
            let j_lo = ((c / grid.step()) - 1e-9).ceil().max(0.0) as usize;
            let mut tail = trapezoid_range(f_u, grid.step(), j_lo, grid.n_y() - 1);
            // Partial first cell when the trigger age is off-lattice.
            let lattice = j_lo as f64 * grid.step();
            if lattice > c && j_lo > 0 {
                let w = (lattice - c) / grid.step();
                let f_c = f_u[j_lo] + w * (f_u[j_lo - 1] - f_u[j_lo]);
                tail += 0.5 * (f_c + f_u[j_lo]) * (lattice - c);
            }
            tail * policy.amount
        }
    };

    Ok((deferred, immediate))
}
