//! Survival factors for marriage, divorce and spouse mortality.
//!
//! Every recursion formula involves ratios of survival exponentials such as
//! `ℓ_t / ℓ_v`. These are always computed as `exp(-∫_v^t rate)`, integrating
//! directly over `[v, t]`, never as a quotient of two exponentials: the
//! quotient form underflows catastrophically over long horizons.

use crate::error::{EngineError, Result};
use crate::intensity::{IntensityCurve, MortalitySurface, DEFAULT_STEP};

/// A probability of surviving some interval; always in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct SurvivalFactor(f64);

impl SurvivalFactor {
    pub fn value(self) -> f64 {
        self.0
    }

    fn from_hazard(hazard: f64) -> Self {
        debug_assert!(hazard >= 0.0);
        Self((-hazard).exp())
    }
}

/// `exp(-∫_a^b rate)`: survival over `[a, b]` under the curve's hazard.
///
/// Equals `ℓ_b / ℓ_a` in exact arithmetic.
pub fn survival_factor(curve: &IntensityCurve, a: f64, b: f64) -> Result<SurvivalFactor> {
    Ok(SurvivalFactor::from_hazard(curve.integrated(a, b)?))
}

/// Probability that a spouse alive at time `v` with age `y + v - t` survives
/// to time `t`, where it has age `y`:
///
/// ```text
/// exp(-∫_v^t q(r, y + r - t) dr)
/// ```
///
/// The integral runs along the age diagonal with composite trapezoid on cells
/// aligned to the global step lattice, so splitting at a lattice point is
/// exactly multiplicative.
pub fn spouse_survival(
    surface: &MortalitySurface,
    v: f64,
    t: f64,
    y: f64,
) -> Result<SurvivalFactor> {
    if v < 0.0 || v > t {
        return Err(EngineError::InvalidArgument(format!(
            "need 0 <= v <= t, got v = {v}, t = {t}"
        )));
    }
    let age_at_v = y + v - t;
    if age_at_v < -1e-12 {
        return Err(EngineError::Domain(format!(
            "spouse age {age_at_v} at time {v} is negative (pre-birth survival requested)"
        )));
    }
    let rate = |r: f64| surface.rate(r, (y + r - t).max(0.0));
    let mut hazard = 0.0;
    let mut lo = v;
    let mut rate_lo = rate(lo)?;
    while lo < t {
        let hi = crate::quadrature::next_lattice_edge(lo, DEFAULT_STEP).min(t);
        let rate_hi = rate(hi)?;
        hazard += 0.5 * (rate_lo + rate_hi) * (hi - lo);
        lo = hi;
        rate_lo = rate_hi;
    }
    Ok(SurvivalFactor::from_hazard(hazard))
}
