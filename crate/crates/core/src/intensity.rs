//! Hazard, intensity and density inputs of the marital model.
//!
//! The model is driven by five primitives: the marriage intensity `γ(t)`, the
//! divorce intensity `σ(t)`, the spouse mortality surface `q(t, y)`, the
//! age-at-marriage density `φ(y|t)` and the insured death density `h(u)`.
//! All are per-year rates or densities with time measured in years.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{EngineError, Result};

/// Default quadrature step (years) for parameterizations without a closed-form
/// integral, and default grid resolution throughout the engine.
pub const DEFAULT_STEP: f64 = 0.1;

/// Conventional maximal age/time horizon (years).
pub const MAX_AGE: f64 = 125.0;

/// Nonnegative intensity curve over `[0, domain_end]`.
///
/// Piecewise-linear and constant curves integrate in closed form. The
/// Gompertz-Makeham form integrates by composite trapezoid on cells aligned to
/// the global `DEFAULT_STEP` lattice, so that integrals over adjacent
/// intervals add up exactly; its closed form is kept only as a test oracle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum IntensityCurve {
    Constant {
        rate: f64,
    },
    /// Linear interpolation between strictly increasing knots starting at 0.
    PiecewiseLinear {
        knots: Vec<(f64, f64)>,
    },
    /// `alpha + beta * exp(growth * t)`.
    GompertzMakeham {
        alpha: f64,
        beta: f64,
        growth: f64,
    },
    /// Zero at and below `threshold`, the inner curve above. Expresses age
    /// floors such as a minimum marriage age. Evaluation exactly at the
    /// threshold returns the jump midpoint (half the inner rate), which keeps
    /// trapezoid quadrature across the jump at O(step²).
    Floored {
        curve: Box<IntensityCurve>,
        threshold: f64,
    },
}

impl IntensityCurve {
    pub fn constant(rate: f64) -> Result<Self> {
        if !rate.is_finite() || rate < 0.0 {
            return Err(EngineError::Validation(format!(
                "constant intensity must be finite and nonnegative, got {rate}"
            )));
        }
        Ok(Self::Constant { rate })
    }

    pub fn piecewise(knots: Vec<(f64, f64)>) -> Result<Self> {
        if knots.len() < 2 {
            return Err(EngineError::Validation(
                "piecewise curve needs at least two knots".into(),
            ));
        }
        if knots[0].0 != 0.0 {
            return Err(EngineError::Validation(format!(
                "piecewise curve must start at t = 0, got first knot at {}",
                knots[0].0
            )));
        }
        for w in knots.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(EngineError::Validation(format!(
                    "piecewise knots must be strictly increasing, got {} then {}",
                    w[0].0, w[1].0
                )));
            }
        }
        if let Some((t, r)) = knots.iter().find(|(t, r)| !t.is_finite() || !r.is_finite() || *r < 0.0) {
            return Err(EngineError::Validation(format!(
                "piecewise knot ({t}, {r}) must be finite with nonnegative rate"
            )));
        }
        Ok(Self::PiecewiseLinear { knots })
    }

    pub fn gompertz_makeham(alpha: f64, beta: f64, growth: f64) -> Result<Self> {
        if !(alpha.is_finite() && beta.is_finite() && growth.is_finite()) || alpha < 0.0 || beta < 0.0 {
            return Err(EngineError::Validation(format!(
                "Gompertz-Makeham parameters must be finite with alpha, beta >= 0, \
                 got alpha = {alpha}, beta = {beta}, growth = {growth}"
            )));
        }
        Ok(Self::GompertzMakeham { alpha, beta, growth })
    }

    /// Zero the curve at and below `threshold`.
    pub fn with_floor(self, threshold: f64) -> Result<Self> {
        if !threshold.is_finite() || threshold < 0.0 {
            return Err(EngineError::Validation(format!(
                "floor threshold must be finite and nonnegative, got {threshold}"
            )));
        }
        Ok(Self::Floored {
            curve: Box::new(self),
            threshold,
        })
    }

    /// End of the curve's domain (`+∞` for forms defined everywhere).
    pub fn domain_end(&self) -> f64 {
        match self {
            Self::Constant { .. } | Self::GompertzMakeham { .. } => f64::INFINITY,
            Self::PiecewiseLinear { knots } => knots.last().unwrap().0,
            Self::Floored { curve, .. } => curve.domain_end(),
        }
    }

    /// Rate at time `t`.
    pub fn rate(&self, t: f64) -> Result<f64> {
        if !t.is_finite() || t < 0.0 || t > self.domain_end() {
            return Err(EngineError::Domain(format!(
                "t = {t} outside curve domain [0, {}]",
                self.domain_end()
            )));
        }
        Ok(match self {
            Self::Constant { rate } => *rate,
            Self::PiecewiseLinear { knots } => {
                let i = match knots.binary_search_by(|(k, _)| k.partial_cmp(&t).unwrap()) {
                    Ok(i) => return Ok(knots[i].1),
                    Err(i) => i - 1,
                };
                let (t0, r0) = knots[i];
                let (t1, r1) = knots[i + 1];
                r0 + (r1 - r0) * (t - t0) / (t1 - t0)
            }
            Self::GompertzMakeham { alpha, beta, growth } => alpha + beta * (growth * t).exp(),
            Self::Floored { curve, threshold } => {
                if t < *threshold {
                    0.0
                } else if t == *threshold {
                    0.5 * curve.rate(t)?
                } else {
                    curve.rate(t)?
                }
            }
        })
    }

    /// Integrated hazard `∫_a^b rate(v) dv`.
    pub fn integrated(&self, a: f64, b: f64) -> Result<f64> {
        if a > b {
            return Err(EngineError::InvalidArgument(format!(
                "integration bounds out of order: a = {a} > b = {b}"
            )));
        }
        if a < 0.0 || b > self.domain_end() {
            return Err(EngineError::Domain(format!(
                "interval [{a}, {b}] outside curve domain [0, {}]",
                self.domain_end()
            )));
        }
        if a == b {
            return Ok(0.0);
        }
        Ok(match self {
            Self::Constant { rate } => rate * (b - a),
            Self::PiecewiseLinear { knots } => {
                let mut total = 0.0;
                for w in knots.windows(2) {
                    let (t0, r0) = w[0];
                    let (t1, r1) = w[1];
                    let lo = a.max(t0);
                    let hi = b.min(t1);
                    if hi > lo {
                        let slope = (r1 - r0) / (t1 - t0);
                        let f_lo = r0 + slope * (lo - t0);
                        let f_hi = r0 + slope * (hi - t0);
                        total += 0.5 * (f_lo + f_hi) * (hi - lo);
                    }
                }
                total
            }
            Self::GompertzMakeham { .. } => {
                // Lattice-aligned composite trapezoid: splits at multiples of
                // DEFAULT_STEP so adjacent intervals sum to the whole.
                let mut total = 0.0;
                let mut lo = a;
                let mut rate_lo = self.rate(lo)?;
                while lo < b {
                    let hi = crate::quadrature::next_lattice_edge(lo, DEFAULT_STEP).min(b);
                    let rate_hi = self.rate(hi)?;
                    total += 0.5 * (rate_lo + rate_hi) * (hi - lo);
                    lo = hi;
                    rate_lo = rate_hi;
                }
                total
            }
            Self::Floored { curve, threshold } => {
                if b <= *threshold {
                    0.0
                } else {
                    curve.integrated(a.max(*threshold), b)?
                }
            }
        })
    }

    /// The curve seen from a later time origin: `shifted(x0).rate(t) = rate(x0 + t)`.
    ///
    /// Used for portfolio members whose marriage/divorce intensities are
    /// age-indexed: a member aged `x0` at valuation sees `γ(t) = γ_a(x0 + t)`.
    pub fn shifted(&self, origin: f64) -> Result<Self> {
        if !origin.is_finite() || origin < 0.0 {
            return Err(EngineError::InvalidArgument(format!(
                "shift origin must be finite and nonnegative, got {origin}"
            )));
        }
        Ok(match self {
            Self::Constant { rate } => Self::Constant { rate: *rate },
            Self::PiecewiseLinear { knots } => {
                if origin >= knots.last().unwrap().0 {
                    return Err(EngineError::Domain(format!(
                        "shift origin {origin} is at or beyond the last knot {}",
                        knots.last().unwrap().0
                    )));
                }
                let rate_at_origin = self.rate(origin)?;
                let mut shifted = vec![(0.0, rate_at_origin)];
                shifted.extend(
                    knots
                        .iter()
                        .filter(|(t, _)| *t > origin)
                        .map(|(t, r)| (t - origin, *r)),
                );
                Self::PiecewiseLinear { knots: shifted }
            }
            Self::GompertzMakeham { alpha, beta, growth } => Self::GompertzMakeham {
                alpha: *alpha,
                beta: beta * (growth * origin).exp(),
                growth: *growth,
            },
            Self::Floored { curve, threshold } => {
                let inner = curve.shifted(origin)?;
                if *threshold <= origin {
                    inner
                } else {
                    inner.with_floor(threshold - origin)?
                }
            }
        })
    }
}

/// Time dependence of the spouse mortality surface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ImprovementFactor {
    /// `ρ ≡ 1`: no longevity improvement (the G82 case).
    None,
    /// `ρ(t) = exp(-rate * t)`.
    ExpDecay { rate: f64 },
    /// Tabulated `ρ(t)` with linear interpolation.
    Table(IntensityCurve),
}

impl ImprovementFactor {
    pub fn factor(&self, t: f64) -> Result<f64> {
        if !t.is_finite() || t < 0.0 {
            return Err(EngineError::Domain(format!("t = {t} must be nonnegative")));
        }
        match self {
            Self::None => Ok(1.0),
            Self::ExpDecay { rate } => Ok((-rate * t).exp()),
            Self::Table(curve) => curve.rate(t),
        }
    }
}

/// Spouse mortality surface `q(t, y) = ρ(t) · q_base(y)`.
///
/// With `ρ ≡ 1` the surface is time-independent. A multiplicative factor is
/// the simplest structure covering both that case and longevity improvements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MortalitySurface {
    base: IntensityCurve,
    improvement: ImprovementFactor,
}

impl MortalitySurface {
    pub fn new(base: IntensityCurve, improvement: ImprovementFactor) -> Result<Self> {
        if let ImprovementFactor::ExpDecay { rate } = &improvement {
            if !rate.is_finite() || *rate < 0.0 {
                return Err(EngineError::Validation(format!(
                    "improvement decay rate must be finite and nonnegative, got {rate}"
                )));
            }
        }
        Ok(Self { base, improvement })
    }

    pub fn time_independent(base: IntensityCurve) -> Self {
        Self {
            base,
            improvement: ImprovementFactor::None,
        }
    }

    pub fn base(&self) -> &IntensityCurve {
        &self.base
    }

    pub fn improvement(&self) -> &ImprovementFactor {
        &self.improvement
    }

    pub fn is_time_independent(&self) -> bool {
        matches!(self.improvement, ImprovementFactor::None)
    }

    /// Death intensity at time `t` for a spouse of age `y`.
    pub fn rate(&self, t: f64, y: f64) -> Result<f64> {
        if !y.is_finite() || y < 0.0 {
            return Err(EngineError::Domain(format!("age y = {y} must be nonnegative")));
        }
        Ok(self.improvement.factor(t)? * self.base.rate(y)?)
    }
}

/// Age-at-marriage density `φ(y|t)`: density of the spouse's age `y` when the
/// marriage occurs at time `t`.
///
/// At a jump of the density (a uniform bound or a truncation point that falls
/// exactly on an evaluation point) the midpoint of the two one-sided limits is
/// returned, which keeps trapezoid quadrature of the density exact to O(step²)
/// and exactly unit-mass for lattice-aligned uniform supports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum AgeAtMarriageDensity {
    /// Uniform on `[lo + slope·t, hi + slope·t]`.
    Uniform { lo: f64, hi: f64, slope: f64 },
    /// Normal with mean `t + offset` and standard deviation `sigma`,
    /// truncated to `[lo, hi]` and renormalized.
    TruncatedNormal {
        offset: f64,
        sigma: f64,
        lo: f64,
        hi: f64,
    },
    /// Bilinear interpolation on a (t, y) table; zero outside the y range.
    Tabulated(TabulatedDensity),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabulatedDensity {
    t_knots: Vec<f64>,
    y_knots: Vec<f64>,
    /// Row-major, one row of `y_knots.len()` values per t knot.
    values: Vec<f64>,
}

impl TabulatedDensity {
    pub fn new(t_knots: Vec<f64>, y_knots: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        for (name, knots) in [("t", &t_knots), ("y", &y_knots)] {
            if knots.len() < 2 {
                return Err(EngineError::Validation(format!(
                    "tabulated density needs at least two {name} knots"
                )));
            }
            if knots.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(EngineError::Validation(format!(
                    "tabulated density {name} knots must be strictly increasing"
                )));
            }
        }
        if values.len() != t_knots.len() * y_knots.len() {
            return Err(EngineError::Validation(format!(
                "tabulated density has {} values, expected {} x {}",
                values.len(),
                t_knots.len(),
                y_knots.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(EngineError::Validation(
                "tabulated density values must be finite and nonnegative".into(),
            ));
        }
        Ok(Self {
            t_knots,
            y_knots,
            values,
        })
    }

    /// Density row at time `t` (clamped to the t range), interpolated in t.
    fn row_at(&self, t: f64) -> Vec<f64> {
        let n_y = self.y_knots.len();
        let t = t.clamp(self.t_knots[0], *self.t_knots.last().unwrap());
        let i = match self
            .t_knots
            .binary_search_by(|k| k.partial_cmp(&t).unwrap())
        {
            Ok(i) => return self.values[i * n_y..(i + 1) * n_y].to_vec(),
            Err(i) => i - 1,
        };
        let w = (t - self.t_knots[i]) / (self.t_knots[i + 1] - self.t_knots[i]);
        (0..n_y)
            .map(|j| {
                let a = self.values[i * n_y + j];
                let b = self.values[(i + 1) * n_y + j];
                a + w * (b - a)
            })
            .collect()
    }

    fn density(&self, y: f64, t: f64) -> f64 {
        if y < self.y_knots[0] || y > *self.y_knots.last().unwrap() {
            return 0.0;
        }
        let row = self.row_at(t);
        let j = match self
            .y_knots
            .binary_search_by(|k| k.partial_cmp(&y).unwrap())
        {
            Ok(j) => return row[j],
            Err(j) => j - 1,
        };
        let w = (y - self.y_knots[j]) / (self.y_knots[j + 1] - self.y_knots[j]);
        row[j] + w * (row[j + 1] - row[j])
    }
}

impl AgeAtMarriageDensity {
    pub fn uniform(lo: f64, hi: f64, slope: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && slope.is_finite()) || lo < 0.0 || hi <= lo || slope < 0.0 {
            return Err(EngineError::Validation(format!(
                "uniform age density requires 0 <= lo < hi and slope >= 0, \
                 got lo = {lo}, hi = {hi}, slope = {slope}"
            )));
        }
        Ok(Self::Uniform { lo, hi, slope })
    }

    pub fn truncated_normal(offset: f64, sigma: f64, lo: f64, hi: f64) -> Result<Self> {
        if !(offset.is_finite() && sigma.is_finite() && lo.is_finite() && hi.is_finite())
            || sigma <= 0.0
            || lo < 0.0
            || hi <= lo
        {
            return Err(EngineError::Validation(format!(
                "truncated normal age density requires sigma > 0 and 0 <= lo < hi, \
                 got offset = {offset}, sigma = {sigma}, lo = {lo}, hi = {hi}"
            )));
        }
        Ok(Self::TruncatedNormal { offset, sigma, lo, hi })
    }

    pub fn tabulated(table: TabulatedDensity) -> Self {
        Self::Tabulated(table)
    }

    /// `φ(y|t)`; zero for `y < 0` and outside the support.
    ///
    /// Boundary detection tolerates one-ulp-scale offsets so that lattice
    /// bounds written in a config (or formed as sums) still trigger the
    /// jump-midpoint convention.
    pub fn density(&self, y: f64, t: f64) -> f64 {
        if !y.is_finite() || y < 0.0 {
            return 0.0;
        }
        let at = |y: f64, bound: f64| (y - bound).abs() <= 1e-9 * bound.abs().max(1.0);
        match self {
            Self::Uniform { lo, hi, slope } => {
                let lo_t = lo + slope * t;
                let hi_t = hi + slope * t;
                let d = 1.0 / (hi_t - lo_t);
                if at(y, lo_t) || at(y, hi_t) {
                    0.5 * d
                } else if y > lo_t && y < hi_t {
                    d
                } else {
                    0.0
                }
            }
            Self::TruncatedNormal { offset, sigma, lo, hi } => {
                let mean = t + offset;
                let normal = Normal::new(mean, *sigma).expect("validated sigma > 0");
                let z = normal.cdf(*hi) - normal.cdf(*lo);
                if z <= 0.0 {
                    return 0.0;
                }
                let pdf = |x: f64| {
                    let u = (x - mean) / sigma;
                    (-0.5 * u * u).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
                };
                if at(y, *lo) || at(y, *hi) {
                    0.5 * pdf(y) / z
                } else if y > *lo && y < *hi {
                    pdf(y) / z
                } else {
                    0.0
                }
            }
            Self::Tabulated(table) => table.density(y, t),
        }
    }

    /// Interval outside which `φ(·|t)` vanishes.
    pub fn support(&self, t: f64) -> (f64, f64) {
        match self {
            Self::Uniform { lo, hi, slope } => (lo + slope * t, hi + slope * t),
            Self::TruncatedNormal { lo, hi, .. } => (*lo, *hi),
            Self::Tabulated(table) => (table.y_knots[0], *table.y_knots.last().unwrap()),
        }
    }

    /// Conservative support bounds over all marriage times in `[0, t_max]`.
    pub fn support_envelope(&self, t_max: f64) -> (f64, f64) {
        let (lo0, hi0) = self.support(0.0);
        let (lo1, hi1) = self.support(t_max);
        (lo0.min(lo1), hi0.max(hi1))
    }

    /// Exact inverse-CDF sample given a uniform draw `u ∈ [0, 1)`.
    pub fn sample(&self, t: f64, u: f64) -> f64 {
        match self {
            Self::Uniform { lo, hi, slope } => {
                let lo_t = lo + slope * t;
                let hi_t = hi + slope * t;
                lo_t + u * (hi_t - lo_t)
            }
            Self::TruncatedNormal { offset, sigma, lo, hi } => {
                let mean = t + offset;
                let normal = Normal::new(mean, *sigma).expect("validated sigma > 0");
                let c_lo = normal.cdf(*lo);
                let c_hi = normal.cdf(*hi);
                let p = (c_lo + u * (c_hi - c_lo)).clamp(1e-15, 1.0 - 1e-15);
                normal.inverse_cdf(p).clamp(*lo, *hi)
            }
            Self::Tabulated(table) => {
                // Piecewise-linear density: CDF is quadratic within each cell.
                let row = table.row_at(t);
                let knots = &table.y_knots;
                let total: f64 = knots
                    .windows(2)
                    .zip(row.windows(2))
                    .map(|(k, d)| 0.5 * (d[0] + d[1]) * (k[1] - k[0]))
                    .sum();
                if total <= 0.0 {
                    return knots[0];
                }
                let mut target = u * total;
                for (k, d) in knots.windows(2).zip(row.windows(2)) {
                    let w = k[1] - k[0];
                    let cell = 0.5 * (d[0] + d[1]) * w;
                    if target > cell {
                        target -= cell;
                        continue;
                    }
                    let slope = (d[1] - d[0]) / w;
                    let x = if slope.abs() < 1e-12 * (d[0].abs() + 1e-300) || d[0] + d[1] == 0.0 {
                        if d[0] > 0.0 {
                            target / d[0]
                        } else {
                            w
                        }
                    } else {
                        // Solve d0*x + slope*x^2/2 = target for x in [0, w].
                        let disc = (d[0] * d[0] + 2.0 * slope * target).max(0.0);
                        if slope > 0.0 {
                            (disc.sqrt() - d[0]) / slope
                        } else {
                            (d[0] - disc.sqrt()) / -slope
                        }
                    };
                    return k[0] + x.clamp(0.0, w);
                }
                *knots.last().unwrap()
            }
        }
    }
}

/// Checks that `φ(·|t)` integrates to one under the module's quadrature
/// (trapezoid at `DEFAULT_STEP` over the support).
pub fn validate_age_density(phi: &AgeAtMarriageDensity, t: f64, tol: f64) -> bool {
    let (lo, hi) = phi.support(t);
    let hi = hi + DEFAULT_STEP;
    let lo = (lo - DEFAULT_STEP).max(0.0);
    let n = ((hi - lo) / DEFAULT_STEP).ceil() as usize + 1;
    let values: Vec<f64> = (0..n)
        .map(|j| phi.density(lo + j as f64 * DEFAULT_STEP, t))
        .collect();
    let mass = crate::quadrature::trapezoid(&values, DEFAULT_STEP);
    (mass - 1.0).abs() <= tol
}

/// Insured time-of-death density `h(u)`.
///
/// May be defective: the integral over the horizon can be below one, the
/// remainder being mass beyond the horizon (or no death at all when derived
/// from a mortality curve).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DeathDensity {
    /// `h(u) = q(u) · exp(-∫_0^u q)` from an insured mortality curve.
    FromMortality { hazard: IntensityCurve },
    /// Piecewise-linear density on knots; zero outside.
    Tabulated { knots: Vec<(f64, f64)> },
}

impl DeathDensity {
    pub fn from_mortality(hazard: IntensityCurve) -> Self {
        Self::FromMortality { hazard }
    }

    pub fn tabulated(knots: Vec<(f64, f64)>) -> Result<Self> {
        if knots.len() < 2 {
            return Err(EngineError::Validation(
                "tabulated death density needs at least two knots".into(),
            ));
        }
        if knots.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(EngineError::Validation(
                "tabulated death density knots must be strictly increasing".into(),
            ));
        }
        if knots.iter().any(|(u, h)| !u.is_finite() || !h.is_finite() || *u < 0.0 || *h < 0.0) {
            return Err(EngineError::Validation(
                "tabulated death density knots must be finite and nonnegative".into(),
            ));
        }
        let mass: f64 = knots
            .windows(2)
            .map(|w| 0.5 * (w[0].1 + w[1].1) * (w[1].0 - w[0].0))
            .sum();
        if mass > 1.0 + 1e-9 {
            return Err(EngineError::Validation(format!(
                "tabulated death density integrates to {mass}, above one"
            )));
        }
        Ok(Self::Tabulated { knots })
    }

    pub fn density(&self, u: f64) -> Result<f64> {
        if !u.is_finite() || u < 0.0 {
            return Err(EngineError::Domain(format!("u = {u} must be nonnegative")));
        }
        match self {
            Self::FromMortality { hazard } => {
                Ok(hazard.rate(u)? * (-hazard.integrated(0.0, u)?).exp())
            }
            Self::Tabulated { knots } => {
                if u < knots[0].0 || u > knots.last().unwrap().0 {
                    return Ok(0.0);
                }
                let i = match knots.binary_search_by(|(k, _)| k.partial_cmp(&u).unwrap()) {
                    Ok(i) => return Ok(knots[i].1),
                    Err(i) => i - 1,
                };
                let (u0, h0) = knots[i];
                let (u1, h1) = knots[i + 1];
                Ok(h0 + (h1 - h0) * (u - u0) / (u1 - u0))
            }
        }
    }

    /// Mass `∫_0^{t_max} h(u) du` (1 minus this is the neglected tail).
    pub fn mass_up_to(&self, t_max: f64) -> Result<f64> {
        match self {
            Self::FromMortality { hazard } => Ok(1.0 - (-hazard.integrated(0.0, t_max)?).exp()),
            Self::Tabulated { knots } => {
                let mut total = 0.0;
                for w in knots.windows(2) {
                    let (u0, h0) = w[0];
                    let (u1, h1) = w[1];
                    let hi = t_max.min(u1);
                    if hi > u0 {
                        let f_hi = h0 + (h1 - h0) * (hi - u0) / (u1 - u0);
                        total += 0.5 * (h0 + f_hi) * (hi - u0);
                    }
                }
                Ok(total)
            }
        }
    }

    /// Death density for a member already aged `origin` at time zero.
    pub fn shifted(&self, origin: f64) -> Result<Self> {
        match self {
            Self::FromMortality { hazard } => Ok(Self::FromMortality {
                hazard: hazard.shifted(origin)?,
            }),
            Self::Tabulated { .. } => Err(EngineError::InvalidArgument(
                "a tabulated death density cannot be age-shifted; use a mortality curve".into(),
            )),
        }
    }
}

/// The full set of model primitives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntensitySet {
    pub gamma: IntensityCurve,
    pub sigma: IntensityCurve,
    pub q_spouse: MortalitySurface,
    pub phi: AgeAtMarriageDensity,
    pub death: DeathDensity,
}

impl IntensitySet {
    /// Checks that every curve covers the grid it will be evaluated on.
    pub fn validate_for(&self, grid: &crate::grid::GridSpec) -> Result<()> {
        for (name, curve, extent) in [
            ("gamma", &self.gamma, grid.t_max()),
            ("sigma", &self.sigma, grid.t_max()),
        ] {
            if curve.domain_end() < extent {
                return Err(EngineError::Validation(format!(
                    "intensity {name} covers [0, {}] but the grid needs [0, {extent}]",
                    curve.domain_end()
                )));
            }
        }
        if self.q_spouse.base().domain_end() < grid.y_max() {
            return Err(EngineError::Validation(format!(
                "spouse mortality covers ages [0, {}] but the grid needs [0, {}]",
                self.q_spouse.base().domain_end(),
                grid.y_max()
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constant_curve_eval() {
        let c = IntensityCurve::constant(0.1).unwrap();
        assert_eq!(c.rate(7.0).unwrap(), 0.1);
    }

    #[test]
    fn piecewise_midpoint_interpolation() {
        let c = IntensityCurve::piecewise(vec![(0.0, 0.0), (10.0, 0.2)]).unwrap();
        assert!((c.rate(5.0).unwrap() - 0.1).abs() < 1e-15);
        assert!(c.rate(10.5).is_err());
        assert!(c.rate(-0.1).is_err());
    }

    #[test]
    fn gompertz_makeham_eval() {
        // alpha + beta * e^{g t} at t = 60, checked against an independent
        // high-precision evaluation of the formula.
        let c = IntensityCurve::gompertz_makeham(0.0005, 0.00007, 0.09).unwrap();
        assert!((c.rate(60.0).unwrap() - 0.015998449134293096).abs() < 1e-15);
    }

    #[test]
    fn integrated_constant_and_triangle() {
        let c = IntensityCurve::constant(0.1).unwrap();
        assert!((c.integrated(0.0, 10.0).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(c.integrated(4.0, 4.0).unwrap(), 0.0);

        let tri = IntensityCurve::piecewise(vec![(0.0, 0.0), (10.0, 0.2)]).unwrap();
        assert!((tri.integrated(0.0, 10.0).unwrap() - 1.0).abs() < 1e-12);
        assert!(tri.integrated(3.0, 2.0).is_err());
    }

    #[test]
    fn gompertz_integrated_close_to_closed_form() {
        let (alpha, beta, g) = (0.0005, 0.00007, 0.09);
        let c = IntensityCurve::gompertz_makeham(alpha, beta, g).unwrap();
        let closed = |a: f64, b: f64| alpha * (b - a) + beta / g * ((g * b).exp() - (g * a).exp());
        for (a, b) in [(0.0, 60.0), (20.0, 90.0), (0.05, 0.17)] {
            let got = c.integrated(a, b).unwrap();
            let want = closed(a, b);
            assert!(
                (got - want).abs() < 2e-5 * want.abs().max(1e-3),
                "[{a}, {b}]: {got} vs {want}"
            );
        }
    }

    #[test]
    fn floored_curve_zero_below_threshold() {
        let c = IntensityCurve::constant(0.1)
            .unwrap()
            .with_floor(20.0)
            .unwrap();
        assert_eq!(c.rate(19.0).unwrap(), 0.0);
        assert_eq!(c.rate(20.0).unwrap(), 0.05); // jump midpoint
        assert_eq!(c.rate(20.5).unwrap(), 0.1);
        assert!((c.integrated(0.0, 30.0).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(c.integrated(0.0, 15.0).unwrap(), 0.0);
    }

    #[test]
    fn shifted_curves() {
        let c = IntensityCurve::piecewise(vec![(0.0, 0.0), (10.0, 0.2), (20.0, 0.2)]).unwrap();
        let s = c.shifted(5.0).unwrap();
        assert!((s.rate(0.0).unwrap() - 0.1).abs() < 1e-15);
        assert!((s.rate(5.0).unwrap() - 0.2).abs() < 1e-15);

        let gm = IntensityCurve::gompertz_makeham(0.0005, 0.00007, 0.09).unwrap();
        let gms = gm.shifted(30.0).unwrap();
        assert!((gms.rate(30.0).unwrap() - gm.rate(60.0).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn surface_is_separable() {
        let base = IntensityCurve::constant(0.02).unwrap();
        let s = MortalitySurface::time_independent(base.clone());
        assert_eq!(s.rate(3.0, 50.0).unwrap(), 0.02);
        assert_eq!(s.rate(90.0, 50.0).unwrap(), 0.02);
        assert!(s.rate(1.0, -2.0).is_err());

        // rho(t) = e^{-0.01 t}: value checked against a calculator.
        let d = MortalitySurface::new(base, ImprovementFactor::ExpDecay { rate: 0.01 }).unwrap();
        assert!((d.rate(10.0, 50.0).unwrap() - 0.018096748360719191).abs() < 1e-15);
        assert!(!d.is_time_independent());
    }

    #[test]
    fn gompertz_surface_time_independent_when_no_improvement() {
        let base = IntensityCurve::gompertz_makeham(0.0005, 0.00007, 0.09).unwrap();
        let s = MortalitySurface::time_independent(base);
        let a = s.rate(0.0, 70.0).unwrap();
        let b = s.rate(55.0, 70.0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn uniform_density_unit_mass() {
        let phi = AgeAtMarriageDensity::uniform(20.0, 40.0, 0.0).unwrap();
        assert!(validate_age_density(&phi, 30.0, 1e-9));
        assert_eq!(phi.density(25.0, 0.0), 0.05);
        assert_eq!(phi.density(20.0, 0.0), 0.025);
        assert_eq!(phi.density(-1.0, 0.0), 0.0);
        assert_eq!(phi.density(41.0, 0.0), 0.0);
    }

    #[test]
    fn truncated_normal_unit_mass() {
        // mu = t - 3, s = 5: quadrature at the module step stays within 1e-4.
        let phi = AgeAtMarriageDensity::truncated_normal(-3.0, 5.0, 0.0, 80.0).unwrap();
        assert!(validate_age_density(&phi, 30.0, 1e-4));
    }

    #[test]
    fn all_zero_table_fails_validation() {
        let table =
            TabulatedDensity::new(vec![0.0, 50.0], vec![0.0, 50.0], vec![0.0; 4]).unwrap();
        let phi = AgeAtMarriageDensity::tabulated(table);
        assert!(!validate_age_density(&phi, 10.0, 1e-9));
    }

    #[test]
    fn death_density_from_constant_mortality() {
        let h = DeathDensity::from_mortality(IntensityCurve::constant(0.04).unwrap());
        let want = 0.04 * (-0.04f64 * 10.0).exp();
        assert!((h.density(10.0).unwrap() - want).abs() < 1e-15);
        let mass = h.mass_up_to(125.0).unwrap();
        assert!(mass < 1.0 && mass > 0.99);
    }

    #[test]
    fn tabulated_death_density_defective_mass() {
        let h = DeathDensity::tabulated(vec![(0.0, 0.02), (40.0, 0.02)]).unwrap();
        assert!((h.mass_up_to(125.0).unwrap() - 0.8).abs() < 1e-12);
        assert_eq!(h.density(50.0).unwrap(), 0.0);
    }

    proptest! {
        #[test]
        fn integrated_hazard_additive(
            rate in 0.0..0.5f64,
            a in 0.0..40.0f64,
            len1 in 0.0..30.0f64,
            len2 in 0.0..30.0f64,
        ) {
            let c = IntensityCurve::piecewise(vec![(0.0, rate), (100.0, rate * 0.5)]).unwrap();
            let b = a + len1;
            let d = b + len2;
            let left = c.integrated(a, b).unwrap() + c.integrated(b, d).unwrap();
            let whole = c.integrated(a, d).unwrap();
            prop_assert!((left - whole).abs() <= 1e-12 * whole.max(1e-9));
        }

        #[test]
        fn integrated_hazard_monotone_in_upper_bound(
            b1 in 0.0..50.0f64,
            extra in 0.0..50.0f64,
        ) {
            let c = IntensityCurve::gompertz_makeham(0.0005, 0.00007, 0.09).unwrap();
            let short = c.integrated(0.0, b1).unwrap();
            let long = c.integrated(0.0, b1 + extra).unwrap();
            prop_assert!(long >= short);
        }

        #[test]
        fn rates_never_negative(t in 0.0..100.0f64) {
            let curves = [
                IntensityCurve::constant(0.07).unwrap(),
                IntensityCurve::piecewise(vec![(0.0, 0.2), (50.0, 0.0), (100.0, 0.1)]).unwrap(),
                IntensityCurve::gompertz_makeham(0.0005, 0.00007, 0.09).unwrap(),
            ];
            for c in &curves {
                prop_assert!(c.rate(t).unwrap() >= 0.0);
            }
        }

        #[test]
        fn uniform_sampling_stays_in_support(u in 0.0..1.0f64, t in 0.0..50.0f64) {
            let phi = AgeAtMarriageDensity::uniform(20.0, 40.0, 0.5).unwrap();
            let y = phi.sample(t, u);
            let (lo, hi) = phi.support(t);
            prop_assert!(y >= lo && y <= hi);
        }
    }

    #[test]
    fn tabulated_sampling_matches_distribution() {
        // Triangle density on [0, 10]: CDF(x) = (x/10)^2.
        let table = TabulatedDensity::new(
            vec![0.0, 100.0],
            vec![0.0, 10.0],
            vec![0.0, 0.2, 0.0, 0.2],
        )
        .unwrap();
        let phi = AgeAtMarriageDensity::tabulated(table);
        for u in [0.01, 0.25, 0.5, 0.9] {
            let y = phi.sample(5.0, u);
            let want = 10.0 * (u as f64).sqrt();
            assert!((y - want).abs() < 1e-9, "u = {u}: {y} vs {want}");
        }
    }
}
