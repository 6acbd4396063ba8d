//! Age-parameterized special case: no longevity improvement for the spouse
//! and a lower age bound for marriage.
//!
//! With `q(t, y) = q(y)` the spouse survival ratio collapses to a ratio of
//! one-dimensional age survivals, and with `γ(x) = σ(x) = 0` for `x ≤ a` the
//! first single state satisfies `u_0(x) = 1` below the bound and
//! `u_0(x) = exp(-∫_a^x γ)` above it. This module solves that reduction with
//! its own direct quadrature (prefix hazard arrays and per-node sums rather
//! than the general solver's diagonal sweeps), so agreement between the two
//! is a genuine cross-implementation check rather than a wrapper identity.
//!
//! The marriage floor makes the recursion integrand jump at `a_min`. Both
//! solvers sample the jump node at its midpoint value, which keeps the
//! composite trapezoid at O(step²) everywhere except the single node
//! `x = a_min`, where `g` carries a `step · γ(a⁺)/4` artifact instead of an
//! exact zero. The artifact is identical in both code paths and shrinks
//! linearly with the step.

use rayon::prelude::*;

use crate::error::{EngineError, Result};
use crate::grid::{Grid2, GridSpec};
use crate::intensity::{
    AgeAtMarriageDensity, DeathDensity, IntensityCurve, IntensitySet, MortalitySurface,
};
use crate::marital::{MaritalSolution, SolverOptions};
use crate::quadrature::trapezoid;

/// Inputs of the age-parameterized model. Marriage and divorce intensities
/// are zero at and below `a_min`; spouse mortality depends on age only.
#[derive(Debug, Clone, PartialEq)]
pub struct G82Inputs {
    gamma: IntensityCurve,
    sigma: IntensityCurve,
    q_spouse: IntensityCurve,
    phi: AgeAtMarriageDensity,
    a_min: f64,
}

impl G82Inputs {
    /// Builds the inputs, flooring `gamma` and `sigma` at `a_min`.
    pub fn new(
        gamma_age: IntensityCurve,
        sigma_age: IntensityCurve,
        q_spouse_age: IntensityCurve,
        phi: AgeAtMarriageDensity,
        a_min: f64,
    ) -> Result<Self> {
        if !a_min.is_finite() || a_min < 0.0 {
            return Err(EngineError::Validation(format!(
                "marriage age floor must be finite and nonnegative, got {a_min}"
            )));
        }
        Ok(Self {
            gamma: gamma_age.with_floor(a_min)?,
            sigma: sigma_age.with_floor(a_min)?,
            q_spouse: q_spouse_age,
            phi,
            a_min,
        })
    }

    pub fn a_min(&self) -> f64 {
        self.a_min
    }

    /// The same model expressed for the general solver (time parameterized as
    /// age, no longevity factor). `death` is only carried along for valuation;
    /// the marital recursion never reads it.
    pub fn as_intensity_set(&self, death: DeathDensity) -> IntensitySet {
        IntensitySet {
            gamma: self.gamma.clone(),
            sigma: self.sigma.clone(),
            q_spouse: MortalitySurface::time_independent(self.q_spouse.clone()),
            phi: self.phi.clone(),
            death,
        }
    }
}

/// Solves the age-parameterized recursion directly.
///
/// Produces the same [`MaritalSolution`] shape as the general solver, with
/// the time axis read as the insured's age `x`.
pub fn g82_solve(
    inputs: &G82Inputs,
    grid: &GridSpec,
    opts: &SolverOptions,
) -> Result<MaritalSolution> {
    if opts.nu_cap < 1 {
        return Err(EngineError::InvalidArgument("nu_cap must be at least 1".into()));
    }
    if !(opts.eps_trunc > 0.0) {
        return Err(EngineError::InvalidArgument("eps_trunc must be positive".into()));
    }
    if inputs.a_min >= grid.t_max() {
        return Err(EngineError::Validation(format!(
            "marriage age floor {} is at or beyond the grid horizon {}",
            inputs.a_min,
            grid.t_max()
        )));
    }
    let n_x = grid.n_t();
    let n_eta = grid.n_y();
    let step = grid.step();
    let a_idx = grid.lattice_index(inputs.a_min, grid.t_max())?;

    for (name, curve, extent) in [
        ("gamma", &inputs.gamma, grid.t_max()),
        ("sigma", &inputs.sigma, grid.t_max()),
        ("spouse mortality", &inputs.q_spouse, grid.y_max()),
    ] {
        if curve.domain_end() < extent {
            return Err(EngineError::Validation(format!(
                "{name} covers [0, {}] but the grid needs [0, {extent}]",
                curve.domain_end()
            )));
        }
    }

    // Prefix hazards: Γ, Σ over age-of-insured x; Hq over spouse age η,
    // accumulated with the same per-cell trapezoid sampling the general
    // solver applies along its diagonals.
    let mut gamma_cum = vec![0.0; n_x];
    let mut sigma_cum = vec![0.0; n_x];
    for i in 0..n_x - 1 {
        gamma_cum[i + 1] = gamma_cum[i] + inputs.gamma.integrated(grid.t(i), grid.t(i + 1))?;
        sigma_cum[i + 1] = sigma_cum[i] + inputs.sigma.integrated(grid.t(i), grid.t(i + 1))?;
    }
    let q_rate: Vec<f64> = (0..n_eta)
        .map(|j| inputs.q_spouse.rate(grid.y(j)))
        .collect::<Result<_>>()?;
    let mut hq_cum = vec![0.0; n_eta];
    for j in 0..n_eta - 1 {
        hq_cum[j + 1] = hq_cum[j] + 0.5 * step * (q_rate[j] + q_rate[j + 1]);
    }

    let gamma_rate: Vec<f64> = (0..n_x)
        .map(|i| inputs.gamma.rate(grid.t(i)))
        .collect::<Result<_>>()?;
    let sigma_rate: Vec<f64> = (0..n_x)
        .map(|i| inputs.sigma.rate(grid.t(i)))
        .collect::<Result<_>>()?;

    // u_0(x) = 1 below the floor, exp(-∫_a^x γ) above (Γ(a) = 0 by the floor).
    let u0: Vec<f64> = gamma_cum.iter().map(|h| (-h).exp()).collect();

    // Age-at-marriage support window in node units, for pruning.
    let (env_lo, env_hi) = inputs.phi.support_envelope(grid.t_max());
    let m_lo = ((env_lo - step).max(0.0) / step).floor() as usize;
    let m_hi = ((env_hi + step) / step).ceil() as usize;

    let mut joint = Grid2::zeros(n_x, n_eta);
    let mut layers: Vec<crate::marital::MaritalLayer> = Vec::new();
    let mut u_prev = u0.clone();
    let mut residual = f64::INFINITY;
    let mut converged = false;

    for nu in 1..=opts.nu_cap {
        // g_ν(η|x) = ∫_a^x u_{ν-1}(ξ) γ(ξ) φ(ξ+η-x|ξ)
        //            exp(-[(Σ(x)-Σ(ξ)) + (Hq(η)-Hq(η+ξ-x))]) dξ
        let rows: Vec<Vec<f64>> = (0..n_x)
            .into_par_iter()
            .map(|i| {
                let mut row = vec![0.0; n_eta];
                if i < a_idx {
                    return row;
                }
                for (j, slot) in row.iter_mut().enumerate() {
                    // Marriage-age index m = j + k - i must fall in the support.
                    let k_from = a_idx.max((i + m_lo).saturating_sub(j));
                    let k_to = (i + m_hi).saturating_sub(j).min(i);
                    if k_from > k_to {
                        continue;
                    }
                    let mut sum = 0.0;
                    for k in k_from..=k_to {
                        let m = j + k - i;
                        if m >= n_eta {
                            continue;
                        }
                        let density = inputs.phi.density(grid.y(m), grid.t(k));
                        if density == 0.0 {
                            continue;
                        }
                        // Trapezoid over [0, x]; the integrand vanishes below
                        // the floor, so only the upper endpoint is halved.
                        let weight = if k == i { 0.5 } else { 1.0 };
                        let hazard =
                            (sigma_cum[i] - sigma_cum[k]) + (hq_cum[j] - hq_cum[m]);
                        sum += weight
                            * u_prev[k]
                            * gamma_rate[k]
                            * density
                            * (-hazard).exp();
                    }
                    *slot = step * sum;
                }
                row
            })
            .collect();

        let mut g_nu = Grid2::zeros(n_x, n_eta);
        for (i, row) in rows.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                g_nu.set(i, j, *v);
            }
        }

        let mass: Vec<f64> = (0..n_x).map(|i| trapezoid(g_nu.row(i), step)).collect();
        residual = mass.iter().cloned().fold(0.0, f64::max);
        joint.add_assign(&g_nu);

        // u_ν(x) = ∫_0^x [∫ g_ν(y|ξ)(σ(ξ) + q(y)) dy] exp(-(Γ(x)-Γ(ξ))) dξ,
        // as a direct sum over ξ per x.
        let exit_density: Vec<f64> = (0..n_x)
            .map(|v| {
                let weighted: Vec<f64> = g_nu
                    .row(v)
                    .iter()
                    .enumerate()
                    .map(|(j, gv)| gv * (sigma_rate[v] + q_rate[j]))
                    .collect();
                trapezoid(&weighted, step)
            })
            .collect();
        let u_nu: Vec<f64> = (0..n_x)
            .into_par_iter()
            .map(|i| {
                let mut sum = 0.0;
                for k in 0..=i {
                    let weight = if k == 0 || k == i { 0.5 } else { 1.0 };
                    sum += weight * exit_density[k] * (-(gamma_cum[i] - gamma_cum[k])).exp();
                }
                step * sum
            })
            .collect();

        u_prev = u_nu.clone();
        layers.push(crate::marital::MaritalLayer { nu, u: u_nu, mass });
        if residual < opts.eps_trunc {
            converged = true;
            break;
        }
    }
    if !converged && residual > 100.0 * opts.eps_trunc {
        return Err(EngineError::Truncation {
            nu_cap: opts.nu_cap,
            residual,
            threshold: opts.eps_trunc,
        });
    }

    let g: Vec<f64> = (0..n_x)
        .map(|i| layers.iter().map(|l| l.mass[i]).sum())
        .collect();

    MaritalSolution::from_parts(*grid, u0, layers, g, joint, residual, opts.g_floor)
}
