//! Layer recursion for the marriage probability `g(t)` and the conditional
//! spouse-age density `f(y|t)`.
//!
//! The marital state walks `s_0 → m_1 → s_1 → m_2 → …` (single and married
//! states indexed by the marriage count ν). Writing `u_ν(t)` for the
//! probability of sitting in the ν'th single state and `g_ν(y|t)` for the
//! joint density of being in the ν'th married state with a spouse of age `y`,
//! the layers satisfy a coupled recursion:
//!
//! ```text
//! u_0(t)    = exp(-∫_0^t γ)
//! g_ν(y|t)  = ∫_0^t u_{ν-1}(v) γ(v) φ(y+v-t|v)
//!                 · exp(-∫_v^t σ) · exp(-∫_v^t q(r, y+r-t) dr) dv
//! u_ν(t)    = ∫_0^∞ ∫_0^t g_ν(y|v) (σ(v) + q(v,y)) · exp(-∫_v^t γ) dv dy
//! ```
//!
//! with aggregates `g(t) = Σ_ν ∫ g_ν(y|t) dy` and
//! `f(y|t) = Σ_ν g_ν(y|t) / g(t)`.
//!
//! Each `g_ν` is evaluated along spouse birth-time diagonals of the (t, y)
//! grid: with a step shared by both axes the kernel argument `y + v - t`
//! always lands on a node, and [`decay_weighted_sweep`] walks a whole
//! diagonal in one O(n) pass while keeping every survival exponential a
//! differenced integral.

use rayon::prelude::*;

use crate::error::{EngineError, Result};
use crate::grid::{Grid2, GridSpec};
use crate::intensity::{ImprovementFactor, IntensitySet};
use crate::quadrature::{decay_weighted_sweep, trapezoid};

/// Truncation and definedness controls for the layer series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Maximum remarriage count retained in the series.
    pub nu_cap: usize,
    /// Stop once the newest layer's mass falls below this everywhere.
    pub eps_trunc: f64,
    /// Below this marriage probability the conditional density is reported
    /// as unavailable rather than formed as 0/0.
    pub g_floor: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            nu_cap: 20,
            eps_trunc: 1e-10,
            g_floor: 1e-12,
        }
    }
}

/// One layer of the recursion: marriage index ν with its single-state
/// probabilities and married-state mass.
#[derive(Debug, Clone)]
pub struct MaritalLayer {
    pub nu: usize,
    /// `u_ν(t)` on the time grid.
    pub u: Vec<f64>,
    /// `∫ g_ν(y|t) dy` on the time grid.
    pub mass: Vec<f64>,
}

/// Gridded solution of the marital recursion.
#[derive(Debug, Clone)]
pub struct MaritalSolution {
    grid: GridSpec,
    u0: Vec<f64>,
    layers: Vec<MaritalLayer>,
    g: Vec<f64>,
    joint: Grid2,
    nu_used: usize,
    truncation_residual: f64,
    g_floor: f64,
}

impl MaritalSolution {
    /// Assembles a solution from already-computed pieces (used by the
    /// age-parameterized solver, which shares this container).
    pub(crate) fn from_parts(
        grid: GridSpec,
        u0: Vec<f64>,
        layers: Vec<MaritalLayer>,
        g: Vec<f64>,
        joint: Grid2,
        truncation_residual: f64,
        g_floor: f64,
    ) -> Result<Self> {
        if u0.len() != grid.n_t() || g.len() != grid.n_t() {
            return Err(EngineError::GridMismatch(
                "solution vectors do not match the grid".into(),
            ));
        }
        Ok(Self {
            grid,
            u0,
            nu_used: layers.len(),
            layers,
            g,
            joint,
            truncation_residual,
            g_floor,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// `u_0(t) = exp(-∫_0^t γ)` on the time grid.
    pub fn u0(&self) -> &[f64] {
        &self.u0
    }

    pub fn layers(&self) -> &[MaritalLayer] {
        &self.layers
    }

    /// `g(t)` on the time grid.
    pub fn g_nodes(&self) -> &[f64] {
        &self.g
    }

    /// Joint density `g(t) f(y|t) = Σ_ν g_ν(y|t)` on the full grid.
    pub fn joint_density(&self) -> &Grid2 {
        &self.joint
    }

    pub fn nu_used(&self) -> usize {
        self.nu_used
    }

    /// Largest mass of the last computed layer (the truncated tail's scale).
    pub fn truncation_residual(&self) -> f64 {
        self.truncation_residual
    }

    pub fn g_floor(&self) -> f64 {
        self.g_floor
    }

    /// `g(t)`, linearly interpolated between grid nodes.
    pub fn marriage_probability(&self, t: f64) -> Result<f64> {
        let (i, w) = self.grid.locate(t, self.grid.t_max(), self.grid.n_t())?;
        Ok(self.g[i] + w * (self.g[i + 1] - self.g[i]))
    }

    /// `f(y|t)`, bilinearly interpolated between grid nodes.
    ///
    /// Errors with [`EngineError::UndefinedConditional`] where the marriage
    /// probability is below the floor.
    pub fn spouse_age_density(&self, t: f64, y: f64) -> Result<f64> {
        let (i, wt) = self.grid.locate(t, self.grid.t_max(), self.grid.n_t())?;
        let (j, wy) = self.grid.locate(y, self.grid.y_max(), self.grid.n_y())?;
        let mut corners = [0.0; 4];
        for (slot, (di, dj)) in corners.iter_mut().zip([(0, 0), (0, 1), (1, 0), (1, 1)]) {
            let gi = self.g[i + di];
            if gi < self.g_floor {
                return Err(EngineError::UndefinedConditional {
                    t: self.grid.t(i + di),
                    g: gi,
                });
            }
            *slot = self.joint.get(i + di, j + dj) / gi;
        }
        let lo = corners[0] + wy * (corners[1] - corners[0]);
        let hi = corners[2] + wy * (corners[3] - corners[2]);
        Ok(lo + wt * (hi - lo))
    }

    /// Signed defect `u_0(t) + Σ_ν u_ν(t) + g(t) - 1` per time node. The
    /// states partition the sample space, so this measures accumulated
    /// quadrature and truncation error.
    pub fn conservation_defect(&self) -> Vec<f64> {
        (0..self.grid.n_t())
            .map(|i| {
                let singles: f64 = self.layers.iter().map(|l| l.u[i]).sum::<f64>() + self.u0[i];
                singles + self.g[i] - 1.0
            })
            .collect()
    }
}

/// Per-grid evaluations of the intensity set, shared by the layer passes.
struct Tables {
    step: f64,
    n_t: usize,
    n_y: usize,
    gamma_rate: Vec<f64>,
    gamma_inc: Vec<f64>,
    sigma_rate: Vec<f64>,
    sigma_inc: Vec<f64>,
    /// Longevity factor ρ(t) per time node.
    q_factor: Vec<f64>,
    /// Base mortality q_base(y) per age node.
    q_base: Vec<f64>,
    /// Age-at-marriage support envelope, padded by one cell.
    phi_lo: f64,
    phi_hi: f64,
}

impl Tables {
    fn new(set: &IntensitySet, grid: &GridSpec) -> Result<Self> {
        set.validate_for(grid)?;
        let n_t = grid.n_t();
        let n_y = grid.n_y();
        let step = grid.step();
        let mut gamma_rate = Vec::with_capacity(n_t);
        let mut sigma_rate = Vec::with_capacity(n_t);
        let mut q_factor = Vec::with_capacity(n_t);
        for i in 0..n_t {
            let t = grid.t(i);
            gamma_rate.push(set.gamma.rate(t)?);
            sigma_rate.push(set.sigma.rate(t)?);
            q_factor.push(match set.q_spouse.improvement() {
                ImprovementFactor::None => 1.0,
                ImprovementFactor::ExpDecay { rate } => (-rate * t).exp(),
                ImprovementFactor::Table(curve) => curve.rate(t)?,
            });
        }
        let mut gamma_inc = Vec::with_capacity(n_t - 1);
        let mut sigma_inc = Vec::with_capacity(n_t - 1);
        for i in 0..n_t - 1 {
            gamma_inc.push(set.gamma.integrated(grid.t(i), grid.t(i + 1))?);
            sigma_inc.push(set.sigma.integrated(grid.t(i), grid.t(i + 1))?);
        }
        let mut q_base = Vec::with_capacity(n_y);
        for j in 0..n_y {
            q_base.push(set.q_spouse.base().rate(grid.y(j))?);
        }
        let (phi_lo, phi_hi) = set.phi.support_envelope(grid.t_max());
        Ok(Self {
            step,
            n_t,
            n_y,
            gamma_rate,
            gamma_inc,
            sigma_rate,
            sigma_inc,
            q_factor,
            q_base,
            phi_lo: phi_lo - step,
            phi_hi: phi_hi + step,
        })
    }

    #[inline]
    fn q(&self, i: usize, j: usize) -> f64 {
        self.q_factor[i] * self.q_base[j]
    }
}

fn g_layer(tables: &Tables, set: &IntensitySet, grid: &GridSpec, u_prev: &[f64]) -> Grid2 {
    let n_t = tables.n_t;
    let n_y = tables.n_y;
    let step = tables.step;
    // One sweep per spouse birth-time diagonal c = i - j.
    let results: Vec<(isize, usize, Vec<f64>)> = (-(n_y as isize - 1)..n_t as isize)
        .into_par_iter()
        .map(|c| {
            let i_lo = c.max(0) as usize;
            let i_hi = ((c + n_y as isize - 1) as usize).min(n_t - 1);
            let len = i_hi + 1 - i_lo;
            let mut m = vec![0.0; len];
            for (k_local, slot) in m.iter_mut().enumerate() {
                let k = i_lo + k_local;
                let age = (k as isize - c) as f64 * step;
                if age < tables.phi_lo || age > tables.phi_hi {
                    continue;
                }
                let density = set.phi.density(age, grid.t(k));
                if density > 0.0 {
                    *slot = u_prev[k] * tables.gamma_rate[k] * density;
                }
            }
            let values = decay_weighted_sweep(&m, step, |k_local| {
                let k = i_lo + k_local;
                let j = (k as isize - c) as usize;
                tables.sigma_inc[k] + 0.5 * step * (tables.q(k, j) + tables.q(k + 1, j + 1))
            });
            (c, i_lo, values)
        })
        .collect();

    let mut out = Grid2::zeros(n_t, n_y);
    for (c, i_lo, values) in results {
        for (k_local, value) in values.into_iter().enumerate() {
            let i = i_lo + k_local;
            let j = (i as isize - c) as usize;
            out.set(i, j, value);
        }
    }
    out
}

fn u_layer(tables: &Tables, g_nu: &Grid2) -> Vec<f64> {
    let step = tables.step;
    // Exit density out of the ν'th married state:
    // s_ν(v) = ∫ g_ν(y|v) (σ(v) + q(v,y)) dy.
    let exit_density: Vec<f64> = (0..tables.n_t)
        .map(|v| {
            let weighted: Vec<f64> = g_nu
                .row(v)
                .iter()
                .enumerate()
                .map(|(j, gv)| gv * (tables.sigma_rate[v] + tables.q(v, j)))
                .collect();
            trapezoid(&weighted, step)
        })
        .collect();
    decay_weighted_sweep(&exit_density, step, |k| tables.gamma_inc[k])
}

/// Married-state density layer `g_ν(y|t)` from the previous single-state layer.
pub fn compute_g_nu_layer(u_prev: &[f64], set: &IntensitySet, grid: &GridSpec) -> Result<Grid2> {
    let tables = Tables::new(set, grid)?;
    if u_prev.len() != tables.n_t {
        return Err(EngineError::GridMismatch(format!(
            "u_prev has {} nodes, the grid has {}",
            u_prev.len(),
            tables.n_t
        )));
    }
    Ok(g_layer(&tables, set, grid, u_prev))
}

/// Single-state layer `u_ν(t)` from the married-state density `g_ν`.
pub fn compute_u_nu_layer(g_nu: &Grid2, set: &IntensitySet, grid: &GridSpec) -> Result<Vec<f64>> {
    let tables = Tables::new(set, grid)?;
    if g_nu.n_t() != tables.n_t || g_nu.n_y() != tables.n_y {
        return Err(EngineError::GridMismatch(format!(
            "g_nu is {} x {}, the grid is {} x {}",
            g_nu.n_t(),
            g_nu.n_y(),
            tables.n_t,
            tables.n_y
        )));
    }
    Ok(u_layer(&tables, g_nu))
}

/// Solves the full layer recursion.
///
/// Layers alternate (`g_ν` from `u_{ν-1}`, then `u_ν` from `g_ν`) until the
/// newest layer's mass stays below `opts.eps_trunc` everywhere or the layer
/// cap is hit. Hitting the cap with a residual above `100 · eps_trunc` is a
/// truncation error rather than a silently degraded answer.
pub fn solve_marital(
    set: &IntensitySet,
    grid: &GridSpec,
    opts: &SolverOptions,
) -> Result<MaritalSolution> {
    if opts.nu_cap < 1 {
        return Err(EngineError::InvalidArgument("nu_cap must be at least 1".into()));
    }
    if !(opts.eps_trunc > 0.0) {
        return Err(EngineError::InvalidArgument(
            "eps_trunc must be positive".into(),
        ));
    }
    let tables = Tables::new(set, grid)?;
    let n_t = tables.n_t;

    let mut u0 = Vec::with_capacity(n_t);
    let mut hazard = 0.0;
    u0.push(1.0);
    for inc in &tables.gamma_inc {
        hazard += inc;
        u0.push((-hazard).exp());
    }

    let mut joint = Grid2::zeros(n_t, tables.n_y);
    let mut layers: Vec<MaritalLayer> = Vec::new();
    let mut u_prev = u0.clone();
    let mut residual = f64::INFINITY;
    let mut converged = false;

    for nu in 1..=opts.nu_cap {
        let g_nu = g_layer(&tables, set, grid, &u_prev);
        let mass: Vec<f64> = (0..n_t)
            .map(|i| trapezoid(g_nu.row(i), tables.step))
            .collect();
        residual = mass.iter().cloned().fold(0.0, f64::max);
        joint.add_assign(&g_nu);
        let u_nu = u_layer(&tables, &g_nu);
        u_prev = u_nu.clone();
        layers.push(MaritalLayer { nu, u: u_nu, mass });
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

    let g: Vec<f64> = (0..n_t)
        .map(|i| layers.iter().map(|l| l.mass[i]).sum())
        .collect();

    Ok(MaritalSolution {
        grid: *grid,
        u0,
        nu_used: layers.len(),
        layers,
        g,
        joint,
        truncation_residual: residual,
        g_floor: opts.g_floor,
    })
}
