//! Scenario configuration: a single TOML document describing the model,
//! grid, policy, rates and run settings.
//!
//! See the repository README for a complete annotated example. The schema is
//! strict: unknown fields are rejected, and every numeric object is validated
//! when the domain objects are built.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{EngineError, Result};
use crate::g82::G82Inputs;
use crate::grid::GridSpec;
use crate::intensity::{
    AgeAtMarriageDensity, DeathDensity, ImprovementFactor, IntensityCurve, IntensitySet,
    MortalitySurface, TabulatedDensity,
};
use crate::marital::SolverOptions;
use crate::payments::{PolicyKind, PolicySpec};
use crate::valuation::{PortfolioMember, ShortRate};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CurveForm {
    Constant { rate: f64 },
    Piecewise { knots: Vec<[f64; 2]> },
    GompertzMakeham { alpha: f64, beta: f64, growth: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveConfig {
    #[serde(flatten)]
    pub form: CurveForm,
    /// Optional age floor: the rate is zero at and below this value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub floor_below: Option<f64>,
}

impl CurveConfig {
    pub fn build(&self) -> Result<IntensityCurve> {
        let curve = match &self.form {
            CurveForm::Constant { rate } => IntensityCurve::constant(*rate)?,
            CurveForm::Piecewise { knots } => {
                IntensityCurve::piecewise(knots.iter().map(|k| (k[0], k[1])).collect())?
            }
            CurveForm::GompertzMakeham { alpha, beta, growth } => {
                IntensityCurve::gompertz_makeham(*alpha, *beta, *growth)?
            }
        };
        match self.floor_below {
            Some(threshold) => curve.with_floor(threshold),
            None => Ok(curve),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ImprovementConfig {
    None,
    ExpDecay { rate: f64 },
    Table { knots: Vec<[f64; 2]> },
}

impl Default for ImprovementConfig {
    fn default() -> Self {
        Self::None
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfaceConfig {
    pub base: CurveConfig,
    #[serde(default)]
    pub improvement: ImprovementConfig,
}

impl SurfaceConfig {
    pub fn build(&self) -> Result<MortalitySurface> {
        let improvement = match &self.improvement {
            ImprovementConfig::None => ImprovementFactor::None,
            ImprovementConfig::ExpDecay { rate } => ImprovementFactor::ExpDecay { rate: *rate },
            ImprovementConfig::Table { knots } => ImprovementFactor::Table(
                IntensityCurve::piecewise(knots.iter().map(|k| (k[0], k[1])).collect())?,
            ),
        };
        MortalitySurface::new(self.base.build()?, improvement)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AgeDensityConfig {
    Uniform {
        lo: f64,
        hi: f64,
        #[serde(default)]
        slope: f64,
    },
    TruncatedNormal {
        offset: f64,
        sigma: f64,
        #[serde(default)]
        lo: f64,
        hi: f64,
    },
    Table {
        t_knots: Vec<f64>,
        y_knots: Vec<f64>,
        /// One row per t knot.
        values: Vec<Vec<f64>>,
    },
}

impl AgeDensityConfig {
    pub fn build(&self) -> Result<AgeAtMarriageDensity> {
        match self {
            Self::Uniform { lo, hi, slope } => AgeAtMarriageDensity::uniform(*lo, *hi, *slope),
            Self::TruncatedNormal { offset, sigma, lo, hi } => {
                AgeAtMarriageDensity::truncated_normal(*offset, *sigma, *lo, *hi)
            }
            Self::Table { t_knots, y_knots, values } => {
                let flat: Vec<f64> = values.iter().flatten().copied().collect();
                Ok(AgeAtMarriageDensity::tabulated(TabulatedDensity::new(
                    t_knots.clone(),
                    y_knots.clone(),
                    flat,
                )?))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DeathConfig {
    FromMortality { curve: CurveConfig },
    Table { knots: Vec<[f64; 2]> },
}

impl DeathConfig {
    pub fn build(&self) -> Result<DeathDensity> {
        match self {
            Self::FromMortality { curve } => Ok(DeathDensity::from_mortality(curve.build()?)),
            Self::Table { knots } => {
                DeathDensity::tabulated(knots.iter().map(|k| (k[0], k[1])).collect())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntensitiesConfig {
    pub gamma: CurveConfig,
    pub sigma: CurveConfig,
    pub spouse_mortality: SurfaceConfig,
    pub age_at_marriage: AgeDensityConfig,
    pub death: DeathConfig,
}

impl IntensitiesConfig {
    pub fn build(&self) -> Result<IntensitySet> {
        Ok(IntensitySet {
            gamma: self.gamma.build()?,
            sigma: self.sigma.build()?,
            q_spouse: self.spouse_mortality.build()?,
            phi: self.age_at_marriage.build()?,
            death: self.death.build()?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub step: f64,
    #[serde(default = "default_t_max")]
    pub t_max: f64,
    #[serde(default = "default_y_max")]
    pub y_max: f64,
}

fn default_t_max() -> f64 {
    crate::intensity::MAX_AGE
}

fn default_y_max() -> f64 {
    crate::intensity::MAX_AGE
}

impl GridConfig {
    pub fn build(&self) -> Result<GridSpec> {
        GridSpec::new(self.step, self.t_max, self.y_max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyConfig {
    /// `lifelong_annuity`, `terminating_annuity` or `lump_sum_at_age`.
    pub kind: String,
    pub amount: f64,
    /// Termination or trigger age, for the kinds that need one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    /// Spouse mortality after the insured's death; defaults to the marital
    /// model's spouse surface.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_ad: Option<SurfaceConfig>,
}

impl PolicyConfig {
    pub fn build(&self, default_q_ad: &MortalitySurface) -> Result<PolicySpec> {
        let kind = match self.kind.as_str() {
            "lifelong_annuity" => PolicyKind::LifelongAnnuity,
            "terminating_annuity" => PolicyKind::TerminatingAnnuity {
                termination_age: self.c.ok_or_else(|| {
                    EngineError::Config("policy.c is required for a terminating annuity".into())
                })?,
            },
            "lump_sum_at_age" => PolicyKind::LumpSumAtAge {
                trigger_age: self.c.ok_or_else(|| {
                    EngineError::Config("policy.c is required for a lump sum at age".into())
                })?,
            },
            other => {
                return Err(EngineError::Config(format!(
                    "unknown policy kind `{other}` (expected lifelong_annuity, \
                     terminating_annuity or lump_sum_at_age)"
                )))
            }
        };
        let q_ad = match &self.q_ad {
            Some(cfg) => cfg.build()?,
            None => default_q_ad.clone(),
        };
        PolicySpec::new(kind, self.amount, q_ad)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruncationConfig {
    #[serde(default = "default_nu_cap")]
    pub nu_cap: usize,
    #[serde(default = "default_epsilon_trunc")]
    pub epsilon_trunc: f64,
    #[serde(default = "default_g_floor")]
    pub g_floor: f64,
}

fn default_nu_cap() -> usize {
    20
}

fn default_epsilon_trunc() -> f64 {
    1e-10
}

fn default_g_floor() -> f64 {
    1e-12
}

impl Default for TruncationConfig {
    fn default() -> Self {
        Self {
            nu_cap: default_nu_cap(),
            epsilon_trunc: default_epsilon_trunc(),
            g_floor: default_g_floor(),
        }
    }
}

impl TruncationConfig {
    pub fn build(&self) -> SolverOptions {
        SolverOptions {
            nu_cap: self.nu_cap,
            eps_trunc: self.epsilon_trunc,
            g_floor: self.g_floor,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    #[serde(default = "default_n_paths")]
    pub n_paths: u64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Times at which spouse-age histograms are collected.
    #[serde(default)]
    pub f_times: Vec<f64>,
    #[serde(default = "default_bin_width")]
    pub bin_width: f64,
    /// Times at which `g` is compared against the simulation; defaults to
    /// `f_times` when empty.
    #[serde(default)]
    pub g_times: Vec<f64>,
}

fn default_n_paths() -> u64 {
    100_000
}

fn default_seed() -> u64 {
    42
}

fn default_bin_width() -> f64 {
    1.0
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            n_paths: default_n_paths(),
            seed: default_seed(),
            f_times: Vec::new(),
            bin_width: default_bin_width(),
            g_times: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemberConfig {
    pub age: f64,
    #[serde(default = "default_weight")]
    pub weight: f64,
    pub policy: PolicyConfig,
}

fn default_weight() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PortfolioConfig {
    pub members: Vec<MemberConfig>,
}

/// G82 mode: solve the age-parameterized model and check it against the
/// general solver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct G82Config {
    pub a_min: f64,
    #[serde(default = "default_tol_g")]
    pub tol_g: f64,
    #[serde(default = "default_tol_f")]
    pub tol_f: f64,
}

fn default_tol_g() -> f64 {
    1e-6
}

fn default_tol_f() -> f64 {
    1e-5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub grid: GridConfig,
    pub intensities: IntensitiesConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy: Option<PolicyConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub short_rate: Option<CurveConfig>,
    #[serde(default)]
    pub truncation: TruncationConfig,
    #[serde(default)]
    pub simulation: SimulationConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub portfolio: Option<PortfolioConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g82: Option<G82Config>,
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| EngineError::Config(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            EngineError::Config(format!("cannot read {}: {e}", path.display()))
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| EngineError::Config(e.to_string()))
    }

    pub fn build_grid(&self) -> Result<GridSpec> {
        self.grid.build()
    }

    pub fn build_intensities(&self) -> Result<IntensitySet> {
        let set = self.intensities.build()?;
        set.validate_for(&self.grid.build()?)?;
        Ok(set)
    }

    pub fn build_solver_options(&self) -> SolverOptions {
        self.truncation.build()
    }

    pub fn build_policy(&self) -> Result<Option<PolicySpec>> {
        let set = self.intensities.build()?;
        self.policy
            .as_ref()
            .map(|p| p.build(&set.q_spouse))
            .transpose()
    }

    pub fn build_short_rate(&self) -> Result<ShortRate> {
        Ok(match &self.short_rate {
            Some(curve) => ShortRate::new(curve.build()?),
            None => ShortRate::zero(),
        })
    }

    pub fn build_portfolio(&self) -> Result<Vec<PortfolioMember>> {
        let set = self.intensities.build()?;
        self.portfolio
            .as_ref()
            .map(|p| {
                p.members
                    .iter()
                    .map(|m| {
                        Ok(PortfolioMember {
                            age: m.age,
                            weight: m.weight,
                            policy: m.policy.build(&set.q_spouse)?,
                        })
                    })
                    .collect()
            })
            .unwrap_or_else(|| Ok(Vec::new()))
    }

    /// G82 inputs, reading gamma/sigma/spouse mortality as age-indexed.
    pub fn build_g82(&self) -> Result<Option<G82Inputs>> {
        let Some(cfg) = &self.g82 else {
            return Ok(None);
        };
        let surface = self.intensities.spouse_mortality.build()?;
        if !surface.is_time_independent() {
            return Err(EngineError::Config(
                "g82 mode requires spouse mortality without longevity improvement".into(),
            ));
        }
        Ok(Some(G82Inputs::new(
            self.intensities.gamma.build()?,
            self.intensities.sigma.build()?,
            surface.base().clone(),
            self.intensities.age_at_marriage.build()?,
            cfg.a_min,
        )?))
    }

    /// Times where `g` is compared in `compare` runs.
    pub fn g_compare_times(&self) -> Vec<f64> {
        let t_max = self.grid.t_max;
        let times = if !self.simulation.g_times.is_empty() {
            self.simulation.g_times.clone()
        } else if !self.simulation.f_times.is_empty() {
            self.simulation.f_times.clone()
        } else {
            vec![0.25 * t_max, 0.5 * t_max, 0.75 * t_max, t_max]
        };
        times.into_iter().filter(|t| *t >= 0.0 && *t <= t_max).collect()
    }
}
