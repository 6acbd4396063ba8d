//! Path-level Monte Carlo simulation of the marital marked point process.
//!
//! Serves as the independent oracle for the analytic solver: paths walk the
//! transition graph `(s_0,∂) → (m_1,a) → {(s_1,a),(s_1,d)} → (m_2,a) → …`,
//! with marriages fired by `γ`, exits from married states decided by
//! competing divorce (`σ`) and spouse-death (`q(t, age)`) clocks, spouse ages
//! drawn from `φ(·|t)` at each marriage, and the insured's death drawn
//! independently from `h`.
//!
//! Event times come from inverse integrated-hazard sampling on the shared
//! grid (linear within cells); the spouse-death clock accumulates its hazard
//! along the age diagonal. Per-path RNG streams are derived from the master
//! seed and the path index, so runs are reproducible bit for bit regardless
//! of thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{EngineError, Result};
use crate::grid::GridSpec;
use crate::intensity::{DeathDensity, IntensityCurve, IntensitySet, MortalitySurface};
use crate::payments::{PolicyKind, PolicySpec};
use crate::quadrature::cumulative_trapezoid;
use crate::valuation::ShortRate;

/// Paths per parallel work unit; the chunk results are folded in chunk order
/// so floating-point accumulation is independent of the thread schedule.
const CHUNK: u64 = 8192;

/// Remarriage count up to which stopping-time histograms are recorded.
const HIST_LAYERS: usize = 3;

fn exp_draw(rng: &mut ChaCha8Rng) -> f64 {
    let u: f64 = rng.random();
    (-(1.0 - u).ln()).max(1e-12)
}

/// Inverse integrated-hazard sampler on a precomputed cumulative grid.
#[derive(Debug, Clone)]
pub struct HazardSampler {
    step: f64,
    cum: Vec<f64>,
}

impl HazardSampler {
    pub fn new(curve: &IntensityCurve, grid: &GridSpec) -> Result<Self> {
        let n = grid.n_t();
        let mut cum = Vec::with_capacity(n);
        cum.push(0.0);
        let mut acc = 0.0;
        for i in 0..n - 1 {
            acc += curve.integrated(grid.t(i), grid.t(i + 1))?;
            cum.push(acc);
        }
        Ok(Self {
            step: grid.step(),
            cum,
        })
    }

    fn cum_at(&self, t: f64) -> f64 {
        let pos = (t / self.step).min((self.cum.len() - 1) as f64);
        let i = (pos.floor() as usize).min(self.cum.len() - 2);
        let w = pos - i as f64;
        self.cum[i] + w * (self.cum[i + 1] - self.cum[i])
    }

    /// First event time after `start` given a unit-exponential draw, or
    /// `+∞` when the remaining hazard cannot reach the draw.
    pub fn sample(&self, start: f64, exp_draw: f64) -> f64 {
        let target = self.cum_at(start) + exp_draw;
        if target > *self.cum.last().unwrap() {
            return f64::INFINITY;
        }
        let k = self.cum.partition_point(|c| *c < target);
        if k == 0 {
            return start;
        }
        let lo = self.cum[k - 1];
        let hi = self.cum[k];
        let frac = if hi > lo { (target - lo) / (hi - lo) } else { 1.0 };
        (((k - 1) as f64 + frac) * self.step).max(start)
    }
}

/// First event time after `start` under `curve`'s hazard, using the grid's
/// precomputed cumulative hazard (built per call; build a [`HazardSampler`]
/// for repeated draws).
pub fn sample_time_from_hazard(
    curve: &IntensityCurve,
    start: f64,
    grid: &GridSpec,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    if start < 0.0 {
        return Err(EngineError::InvalidArgument(format!(
            "start must be nonnegative, got {start}"
        )));
    }
    let sampler = HazardSampler::new(curve, grid)?;
    let e = exp_draw(rng);
    Ok(sampler.sample(start, e))
}

/// Event time of the age-indexed spouse clock `r ↦ q(r, age(r))`, walking the
/// shared step lattice along the age diagonal from `(start, age_at_start)`.
fn sample_age_diagonal(
    surface: &MortalitySurface,
    start: f64,
    age_at_start: f64,
    t_max: f64,
    step: f64,
    exp_draw: f64,
) -> Result<f64> {
    let mut acc = 0.0;
    let mut lo = start;
    let mut rate_lo = surface.rate(lo, age_at_start)?;
    while lo < t_max {
        let hi = crate::quadrature::next_lattice_edge(lo, step).min(t_max);
        let rate_hi = surface.rate(hi, age_at_start + (hi - start))?;
        let cell = 0.5 * (rate_lo + rate_hi) * (hi - lo);
        if acc + cell >= exp_draw {
            let frac = if cell > 0.0 { (exp_draw - acc) / cell } else { 1.0 };
            return Ok(lo + frac * (hi - lo));
        }
        acc += cell;
        lo = hi;
        rate_lo = rate_hi;
    }
    Ok(f64::INFINITY)
}

/// Sampler over the insured's death density.
#[derive(Debug, Clone)]
enum DeathSampler {
    FromHazard(HazardSampler),
    Table { knots: Vec<(f64, f64)> },
}

impl DeathSampler {
    fn new(death: &DeathDensity, grid: &GridSpec) -> Result<Self> {
        Ok(match death {
            DeathDensity::FromMortality { hazard } => {
                Self::FromHazard(HazardSampler::new(hazard, grid)?)
            }
            DeathDensity::Tabulated { knots } => Self::Table {
                knots: knots.clone(),
            },
        })
    }

    /// `None` when no death occurs within the support/horizon (defective mass).
    fn sample(&self, rng: &mut ChaCha8Rng) -> Option<f64> {
        match self {
            Self::FromHazard(sampler) => {
                let t = sampler.sample(0.0, exp_draw(rng));
                t.is_finite().then_some(t)
            }
            Self::Table { knots } => {
                let u: f64 = rng.random();
                let mut target = u; // total mass ≤ 1 for a (possibly defective) density
                for w in knots.windows(2) {
                    let (u0, h0) = w[0];
                    let (u1, h1) = w[1];
                    let width = u1 - u0;
                    let cell = 0.5 * (h0 + h1) * width;
                    if target > cell {
                        target -= cell;
                        continue;
                    }
                    let slope = (h1 - h0) / width;
                    let x = if slope.abs() < 1e-12 * (h0 + 1e-300) || h0 + h1 == 0.0 {
                        if h0 > 0.0 {
                            target / h0
                        } else {
                            width
                        }
                    } else {
                        let disc = (h0 * h0 + 2.0 * slope * target).max(0.0);
                        if slope > 0.0 {
                            (disc.sqrt() - h0) / slope
                        } else {
                            (h0 - disc.sqrt()) / -slope
                        }
                    };
                    return Some(u0 + x.clamp(0.0, width));
                }
                None
            }
        }
    }
}

/// State transition on a simulated path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transition {
    /// Into the ν'th married state.
    Marriage { nu: usize },
    /// Out of the ν'th married state by divorce.
    Divorce { nu: usize },
    /// Out of the ν'th married state by the spouse's death.
    SpouseDeath { nu: usize },
}

/// One realized path of the combined marital/spouse process.
#[derive(Debug, Clone)]
pub struct MaritalPath {
    /// Chronological transitions within `[0, t_max]`.
    pub events: Vec<(f64, Transition)>,
    /// Spouse age at each marriage; index ν-1.
    pub spouse_ages: Vec<f64>,
    /// Insured death time, when it falls within the horizon.
    pub death_time: Option<f64>,
}

impl MaritalPath {
    pub fn marriage_count(&self) -> usize {
        self.spouse_ages.len()
    }

    /// Marriage episodes as `(start, end, spouse_age_at_start)`; an episode
    /// still open at the horizon has `end = +∞`.
    pub fn marriages(&self) -> Vec<(f64, f64, f64)> {
        let mut out = Vec::with_capacity(self.spouse_ages.len());
        let mut open: Option<(f64, f64)> = None;
        for &(t, transition) in &self.events {
            match transition {
                Transition::Marriage { nu } => open = Some((t, self.spouse_ages[nu - 1])),
                Transition::Divorce { .. } | Transition::SpouseDeath { .. } => {
                    let (start, age) = open.take().expect("exit without marriage");
                    out.push((start, t, age));
                }
            }
        }
        if let Some((start, age)) = open {
            out.push((start, f64::INFINITY, age));
        }
        out
    }

    /// `Some((spouse age at t, ν))` when married at `t`.
    pub fn married_at(&self, t: f64) -> Option<(f64, usize)> {
        for (nu, (start, end, age)) in self.marriages().into_iter().enumerate() {
            if start <= t && t < end {
                return Some((age + (t - start), nu + 1));
            }
        }
        None
    }

    /// Checks the transition-graph invariants: times strictly increase,
    /// marriages only happen from the matching single state, exits only leave
    /// the matching married state, and the first single state is never
    /// re-entered with a spouse.
    pub fn validate(&self) -> Result<()> {
        let mut last_time = -f64::INFINITY;
        let mut married = false;
        let mut nu_seen = 0usize;
        for &(t, transition) in &self.events {
            if t <= last_time {
                return Err(EngineError::Validation(format!(
                    "event times must strictly increase: {t} after {last_time}"
                )));
            }
            last_time = t;
            match transition {
                Transition::Marriage { nu } => {
                    if married || nu != nu_seen + 1 {
                        return Err(EngineError::Validation(format!(
                            "marriage {nu} out of order (married={married}, seen={nu_seen})"
                        )));
                    }
                    married = true;
                    nu_seen = nu;
                }
                Transition::Divorce { nu } | Transition::SpouseDeath { nu } => {
                    if !married || nu != nu_seen {
                        return Err(EngineError::Validation(format!(
                            "exit from marriage {nu} out of order (married={married}, seen={nu_seen})"
                        )));
                    }
                    married = false;
                }
            }
        }
        if self.spouse_ages.len() != nu_seen {
            return Err(EngineError::Validation(format!(
                "{} spouse ages for {nu_seen} marriages",
                self.spouse_ages.len()
            )));
        }
        if self.spouse_ages.iter().any(|&y| y < 0.0) {
            return Err(EngineError::Validation("negative spouse age".into()));
        }
        Ok(())
    }
}

/// Histogram with equal bins over `[0, lo + bins · width)`.
#[derive(Debug, Clone)]
pub struct Histogram {
    pub bin_width: f64,
    pub counts: Vec<u64>,
    /// Denominator for density estimates.
    pub n_samples: u64,
}

impl Histogram {
    fn new(bins: usize, bin_width: f64) -> Self {
        Self {
            bin_width,
            counts: vec![0; bins],
            n_samples: 0,
        }
    }

    fn record(&mut self, x: f64) {
        let idx = (x / self.bin_width).floor();
        if idx >= 0.0 && (idx as usize) < self.counts.len() {
            self.counts[idx as usize] += 1;
        }
    }

    fn merge(&mut self, other: &Histogram) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += *b;
        }
    }

    pub fn edges(&self, bin: usize) -> (f64, f64) {
        (
            bin as f64 * self.bin_width,
            (bin + 1) as f64 * self.bin_width,
        )
    }

    /// Density estimate in a bin.
    pub fn density(&self, bin: usize) -> f64 {
        if self.n_samples == 0 {
            return 0.0;
        }
        self.counts[bin] as f64 / (self.n_samples as f64 * self.bin_width)
    }

    /// Binomial standard error of the density estimate.
    pub fn se_density(&self, bin: usize) -> f64 {
        if self.n_samples == 0 {
            return 0.0;
        }
        let n = self.n_samples as f64;
        let p = self.counts[bin] as f64 / n;
        (p * (1.0 - p) / n).sqrt() / self.bin_width
    }
}

/// Spouse-age histogram at one requested time.
#[derive(Debug, Clone)]
pub struct SpouseAgeEstimate {
    pub time: f64,
    pub n_married: u64,
    /// `None` when no path was married at this time.
    pub histogram: Option<Histogram>,
}

/// Monte Carlo estimates of the marital quantities with standard errors.
#[derive(Debug, Clone)]
pub struct SimulationEstimate {
    pub grid: GridSpec,
    pub n_paths: u64,
    /// Fraction of paths married at each time node.
    pub g_hat: Vec<f64>,
    pub g_se: Vec<f64>,
    pub f_hat: Vec<SpouseAgeEstimate>,
    /// Empirical densities of the ν'th marriage time, ν = 1..=3.
    pub marriage_time_hists: Vec<Histogram>,
    /// Empirical densities of the ν'th single-state entry time, ν = 1..=3.
    pub single_time_hists: Vec<Histogram>,
}

/// Policy value estimate from discounted simulated payments.
#[derive(Debug, Clone, Copy)]
pub struct PolicyValueEstimate {
    pub value: f64,
    pub std_error: f64,
    pub n_paths: u64,
}

struct MaritalAccum {
    married_diff: Vec<i64>,
    f_counts: Vec<Histogram>,
    f_married: Vec<u64>,
    marriage_hists: Vec<Histogram>,
    single_hists: Vec<Histogram>,
}

impl MaritalAccum {
    fn new(n_t: usize, f_times: &[f64], f_bins: usize, f_bin: f64, t_bins: usize, t_bin: f64) -> Self {
        Self {
            married_diff: vec![0; n_t + 1],
            f_counts: f_times.iter().map(|_| Histogram::new(f_bins, f_bin)).collect(),
            f_married: vec![0; f_times.len()],
            marriage_hists: (0..HIST_LAYERS).map(|_| Histogram::new(t_bins, t_bin)).collect(),
            single_hists: (0..HIST_LAYERS).map(|_| Histogram::new(t_bins, t_bin)).collect(),
        }
    }

    fn merge(mut self, other: &MaritalAccum) -> Self {
        for (a, b) in self.married_diff.iter_mut().zip(&other.married_diff) {
            *a += *b;
        }
        for (a, b) in self.f_counts.iter_mut().zip(&other.f_counts) {
            a.merge(b);
        }
        for (a, b) in self.f_married.iter_mut().zip(&other.f_married) {
            *a += *b;
        }
        for (a, b) in self.marriage_hists.iter_mut().zip(&other.marriage_hists) {
            a.merge(b);
        }
        for (a, b) in self.single_hists.iter_mut().zip(&other.single_hists) {
            a.merge(b);
        }
        self
    }
}

/// Reusable simulator with precomputed hazard tables.
pub struct Simulator {
    set: IntensitySet,
    grid: GridSpec,
    gamma: HazardSampler,
    sigma: HazardSampler,
    death: DeathSampler,
}

impl Simulator {
    pub fn new(set: &IntensitySet, grid: &GridSpec) -> Result<Self> {
        set.validate_for(grid)?;
        // The spouse clock evaluates q along diagonals up to the oldest
        // reachable age, which can exceed y_max.
        let (_, phi_hi) = set.phi.support_envelope(grid.t_max());
        let reachable = phi_hi + grid.t_max();
        if set.q_spouse.base().domain_end() < reachable {
            return Err(EngineError::Validation(format!(
                "spouse mortality covers ages up to {} but simulated spouses can reach {}",
                set.q_spouse.base().domain_end(),
                reachable
            )));
        }
        Ok(Self {
            set: set.clone(),
            grid: *grid,
            gamma: HazardSampler::new(&set.gamma, grid)?,
            sigma: HazardSampler::new(&set.sigma, grid)?,
            death: DeathSampler::new(&set.death, grid)?,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    fn rng_for(master_seed: u64, purpose: u64, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream((purpose << 56) | index);
        rng
    }

    fn walk(&self, rng: &mut ChaCha8Rng) -> Result<MaritalPath> {
        let t_max = self.grid.t_max();
        let step = self.grid.step();
        let mut events = Vec::new();
        let mut spouse_ages = Vec::new();
        let mut t_now = 0.0;
        let mut nu = 0usize;
        loop {
            let t_marry = self.gamma.sample(t_now, exp_draw(rng));
            if !t_marry.is_finite() || t_marry >= t_max {
                break;
            }
            nu += 1;
            let y0 = self.set.phi.sample(t_marry, rng.random());
            events.push((t_marry, Transition::Marriage { nu }));
            spouse_ages.push(y0);

            // Competing exits: divorce clock and age-indexed spouse death.
            let t_div = self.sigma.sample(t_marry, exp_draw(rng));
            let t_sp = sample_age_diagonal(
                &self.set.q_spouse,
                t_marry,
                y0,
                t_max,
                step,
                exp_draw(rng),
            )?;
            let (t_exit, transition) = if t_div <= t_sp {
                (t_div, Transition::Divorce { nu })
            } else {
                (t_sp, Transition::SpouseDeath { nu })
            };
            if !t_exit.is_finite() || t_exit >= t_max {
                break;
            }
            events.push((t_exit, transition));
            t_now = t_exit;
        }
        let death_time = self
            .death
            .sample(rng)
            .filter(|t| *t <= t_max);
        let path = MaritalPath {
            events,
            spouse_ages,
            death_time,
        };
        #[cfg(debug_assertions)]
        path.validate().expect("simulated path violates transition invariants");
        Ok(path)
    }

    /// Simulates the path with the RNG stream derived from
    /// `(master_seed, index)`.
    pub fn simulate_path(&self, master_seed: u64, index: u64) -> Result<MaritalPath> {
        self.walk(&mut Self::rng_for(master_seed, 0, index))
    }

    /// Estimates `g` on the grid, spouse-age histograms at `f_times`
    /// (bin width `bin`), and the first stopping-time densities.
    pub fn estimate_marital(
        &self,
        n_paths: u64,
        f_times: &[f64],
        bin: f64,
        master_seed: u64,
    ) -> Result<SimulationEstimate> {
        if n_paths == 0 {
            return Err(EngineError::InvalidArgument("n_paths must be positive".into()));
        }
        if !(bin > 0.0) {
            return Err(EngineError::InvalidArgument("bin width must be positive".into()));
        }
        if let Some(&bad) = f_times
            .iter()
            .find(|t| !t.is_finite() || **t < 0.0 || **t > self.grid.t_max())
        {
            return Err(EngineError::InvalidArgument(format!(
                "requested density time {bad} is outside the horizon [0, {}]",
                self.grid.t_max()
            )));
        }
        let n_t = self.grid.n_t();
        let step = self.grid.step();
        let f_bins = (self.grid.y_max() / bin).ceil() as usize;
        let t_bins = (self.grid.t_max() / bin).ceil() as usize;

        let n_chunks = n_paths.div_ceil(CHUNK);
        let accums: Vec<Result<MaritalAccum>> = (0..n_chunks)
            .into_par_iter()
            .map(|chunk| {
                let mut acc = MaritalAccum::new(n_t, f_times, f_bins, bin, t_bins, bin);
                let lo = chunk * CHUNK;
                let hi = ((chunk + 1) * CHUNK).min(n_paths);
                for index in lo..hi {
                    let path = self.walk(&mut Self::rng_for(master_seed, 0, index))?;
                    for (nu, (start, end, _)) in path.marriages().iter().enumerate() {
                        let k_start = (start / step).ceil() as usize;
                        let k_end = if end.is_finite() {
                            ((end / step).ceil() as usize).min(n_t)
                        } else {
                            n_t
                        };
                        if k_start < k_end {
                            acc.married_diff[k_start] += 1;
                            acc.married_diff[k_end] -= 1;
                        }
                        if nu < HIST_LAYERS {
                            acc.marriage_hists[nu].record(*start);
                            if end.is_finite() {
                                acc.single_hists[nu].record(*end);
                            }
                        }
                    }
                    for (slot, &tau) in f_times.iter().enumerate() {
                        if let Some((age, _)) = path.married_at(tau) {
                            acc.f_married[slot] += 1;
                            acc.f_counts[slot].record(age);
                        }
                    }
                }
                Ok(acc)
            })
            .collect();

        let mut total = MaritalAccum::new(n_t, f_times, f_bins, bin, t_bins, bin);
        for acc in accums {
            total = total.merge(&acc?);
        }

        let n = n_paths as f64;
        let mut married = 0i64;
        let mut g_hat = Vec::with_capacity(n_t);
        let mut g_se = Vec::with_capacity(n_t);
        for k in 0..n_t {
            married += total.married_diff[k];
            let p = married as f64 / n;
            g_hat.push(p);
            g_se.push((p * (1.0 - p) / n).sqrt());
        }

        let f_hat = f_times
            .iter()
            .enumerate()
            .map(|(slot, &time)| {
                let n_married = total.f_married[slot];
                let histogram = (n_married > 0).then(|| {
                    let mut h = total.f_counts[slot].clone();
                    h.n_samples = n_married;
                    h
                });
                SpouseAgeEstimate {
                    time,
                    n_married,
                    histogram,
                }
            })
            .collect();

        let finalize = |mut hists: Vec<Histogram>| {
            for h in &mut hists {
                h.n_samples = n_paths;
            }
            hists
        };

        Ok(SimulationEstimate {
            grid: self.grid,
            n_paths,
            g_hat,
            g_se,
            f_hat,
            marriage_time_hists: finalize(total.marriage_hists),
            single_time_hists: finalize(total.single_hists),
        })
    }

    /// Mean discounted policy payments over simulated paths.
    ///
    /// Per path: if the insured dies married at `T` with spouse aged `Y`, the
    /// spouse's remaining lifetime is simulated under the policy's `q_ad` and
    /// the policy's payments are discounted and accumulated up to the horizon.
    pub fn estimate_policy_value(
        &self,
        policy: &PolicySpec,
        rate: &ShortRate,
        n_paths: u64,
        master_seed: u64,
    ) -> Result<PolicyValueEstimate> {
        if n_paths == 0 {
            return Err(EngineError::InvalidArgument("n_paths must be positive".into()));
        }
        let t_max = self.grid.t_max();
        let step = self.grid.step();
        let n_t = self.grid.n_t();

        // Cumulative discount integral ∫_0^x discount(s) ds on the grid.
        let discount: Vec<f64> = (0..n_t)
            .map(|i| rate.discount(self.grid.t(i)))
            .collect::<Result<_>>()?;
        let discount_integral = cumulative_trapezoid(&discount, step);
        let di = |x: f64| -> f64 {
            let pos = (x / step).min((n_t - 1) as f64);
            let i = (pos.floor() as usize).min(n_t - 2);
            let w = pos - i as f64;
            discount_integral[i] + w * (discount_integral[i + 1] - discount_integral[i])
        };

        let n_chunks = n_paths.div_ceil(CHUNK);
        let partials: Vec<Result<(f64, f64)>> = (0..n_chunks)
            .into_par_iter()
            .map(|chunk| {
                let mut sum = 0.0;
                let mut sum_sq = 0.0;
                let lo = chunk * CHUNK;
                let hi = ((chunk + 1) * CHUNK).min(n_paths);
                for index in lo..hi {
                    let mut rng = Self::rng_for(master_seed, 1, index);
                    let path = self.walk(&mut rng)?;
                    let mut value = 0.0;
                    if let Some(t_death) = path.death_time {
                        if let Some((age, _)) = path.married_at(t_death) {
                            value = match policy.kind {
                                PolicyKind::LifelongAnnuity => {
                                    let tau = sample_age_diagonal(
                                        &policy.q_ad,
                                        t_death,
                                        age,
                                        t_max,
                                        step,
                                        exp_draw(&mut rng),
                                    )?;
                                    let end = tau.min(t_max);
                                    policy.amount * (di(end) - di(t_death)).max(0.0)
                                }
                                PolicyKind::TerminatingAnnuity { termination_age } => {
                                    if age >= termination_age {
                                        0.0
                                    } else {
                                        let tau = sample_age_diagonal(
                                            &policy.q_ad,
                                            t_death,
                                            age,
                                            t_max,
                                            step,
                                            exp_draw(&mut rng),
                                        )?;
                                        let end =
                                            tau.min(t_max).min(t_death + termination_age - age);
                                        policy.amount * (di(end) - di(t_death)).max(0.0)
                                    }
                                }
                                PolicyKind::LumpSumAtAge { trigger_age } => {
                                    if age >= trigger_age {
                                        policy.amount * rate.discount(t_death)?
                                    } else {
                                        let t_trigger = t_death + trigger_age - age;
                                        if t_trigger > t_max {
                                            0.0
                                        } else {
                                            let tau = sample_age_diagonal(
                                                &policy.q_ad,
                                                t_death,
                                                age,
                                                t_max,
                                                step,
                                                exp_draw(&mut rng),
                                            )?;
                                            if tau > t_trigger {
                                                policy.amount * rate.discount(t_trigger)?
                                            } else {
                                                0.0
                                            }
                                        }
                                    }
                                }
                            };
                        }
                    }
                    sum += value;
                    sum_sq += value * value;
                }
                Ok((sum, sum_sq))
            })
            .collect();

        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for p in partials {
            let (s, q) = p?;
            sum += s;
            sum_sq += q;
        }
        let n = n_paths as f64;
        let mean = sum / n;
        let variance = ((sum_sq / n - mean * mean) * n / (n - 1.0).max(1.0)).max(0.0);
        Ok(PolicyValueEstimate {
            value: mean,
            std_error: (variance / n).sqrt(),
            n_paths,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::intensity::AgeAtMarriageDensity;

    fn set(gamma: f64, sigma: f64, q: f64) -> IntensitySet {
        IntensitySet {
            gamma: IntensityCurve::constant(gamma).unwrap(),
            sigma: IntensityCurve::constant(sigma).unwrap(),
            q_spouse: MortalitySurface::time_independent(IntensityCurve::constant(q).unwrap()),
            phi: AgeAtMarriageDensity::uniform(20.0, 40.0, 0.0).unwrap(),
            death: DeathDensity::from_mortality(IntensityCurve::constant(0.04).unwrap()),
        }
    }

    fn grid() -> GridSpec {
        GridSpec::new(0.1, 40.0, 90.0).unwrap()
    }

    #[test]
    fn zero_rate_never_fires() {
        let curve = IntensityCurve::constant(0.0).unwrap();
        let sampler = HazardSampler::new(&curve, &grid()).unwrap();
        for e in [0.01, 1.0, 50.0] {
            assert_eq!(sampler.sample(0.0, e), f64::INFINITY);
        }
    }

    #[test]
    fn exponential_mean_matches() {
        let curve = IntensityCurve::constant(0.1).unwrap();
        let g = GridSpec::new(0.1, 400.0, 10.0).unwrap();
        let sampler = HazardSampler::new(&curve, &g).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 200_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let t = sampler.sample(0.0, exp_draw(&mut rng));
            assert!(t.is_finite(), "horizon far beyond the mean");
            sum += t;
        }
        let mean = sum / n as f64;
        let se = 10.0 / (n as f64).sqrt();
        assert!((mean - 10.0).abs() < 4.0 * se, "mean {mean}, se {se}");
    }

    #[test]
    fn gamma_zero_path_stays_single() {
        let sim = Simulator::new(&set(0.0, 0.0, 0.0), &grid()).unwrap();
        let path = sim.simulate_path(1, 0).unwrap();
        assert!(path.events.is_empty());
        assert_eq!(path.marriage_count(), 0);
        assert!(path.married_at(20.0).is_none());
    }

    #[test]
    fn absorbing_case_at_most_one_marriage() {
        let sim = Simulator::new(&set(0.1, 0.0, 0.0), &grid()).unwrap();
        let mut married_by_10 = 0u64;
        let n = 40_000;
        for i in 0..n {
            let path = sim.simulate_path(42, i).unwrap();
            assert!(path.marriage_count() <= 1);
            path.validate().unwrap();
            if path.married_at(10.0).is_some() {
                married_by_10 += 1;
            }
        }
        let p = married_by_10 as f64 / n as f64;
        let want = 1.0 - (-1.0f64).exp();
        let se = (want * (1.0 - want) / n as f64).sqrt();
        assert!((p - want).abs() < 4.0 * se, "p = {p}, want {want} ± {se}");
    }

    #[test]
    fn estimate_marital_g_zero_without_marriage() {
        let sim = Simulator::new(&set(0.0, 0.05, 0.02), &grid()).unwrap();
        let est = sim.estimate_marital(1000, &[20.0], 1.0, 3).unwrap();
        assert!(est.g_hat.iter().all(|&g| g == 0.0));
        assert!(est.f_hat[0].histogram.is_none());
        assert_eq!(est.f_hat[0].n_married, 0);
    }

    #[test]
    fn estimate_binomial_error_bars() {
        let sim = Simulator::new(&set(0.1, 0.0, 0.0), &grid()).unwrap();
        let est = sim.estimate_marital(100_000, &[], 1.0, 11).unwrap();
        let i10 = grid().lattice_index(10.0, 40.0).unwrap();
        let want = 1.0 - (-1.0f64).exp();
        let z = (est.g_hat[i10] - want) / est.g_se[i10];
        assert!(z.abs() < 4.0, "z = {z}");
    }

    #[test]
    fn identical_seed_identical_path() {
        let sim = Simulator::new(&set(0.12, 0.07, 0.03), &grid()).unwrap();
        for index in [0u64, 5, 991] {
            let a = sim.simulate_path(99, index).unwrap();
            let b = sim.simulate_path(99, index).unwrap();
            assert_eq!(a.events.len(), b.events.len());
            for (x, y) in a.events.iter().zip(&b.events) {
                assert!(x.0 == y.0 && x.1 == y.1);
            }
            assert_eq!(a.spouse_ages, b.spouse_ages);
            assert_eq!(a.death_time, b.death_time);
        }
    }

    #[test]
    fn policy_value_zero_without_marriage() {
        let sim = Simulator::new(&set(0.0, 0.0, 0.0), &grid()).unwrap();
        let policy = PolicySpec::new(
            PolicyKind::LifelongAnnuity,
            1.0,
            MortalitySurface::time_independent(IntensityCurve::constant(0.02).unwrap()),
        )
        .unwrap();
        let est = sim
            .estimate_policy_value(&policy, &ShortRate::zero(), 2000, 1)
            .unwrap();
        assert_eq!(est.value, 0.0);
        assert_eq!(est.std_error, 0.0);
    }

    #[test]
    fn policy_value_scales_linearly_in_amount() {
        let sim = Simulator::new(&set(0.1, 0.05, 0.02), &grid()).unwrap();
        let q_ad = MortalitySurface::time_independent(IntensityCurve::constant(0.02).unwrap());
        let rate = ShortRate::new(IntensityCurve::constant(0.03).unwrap());
        let one = PolicySpec::new(PolicyKind::LifelongAnnuity, 1.0, q_ad.clone()).unwrap();
        let three = PolicySpec::new(PolicyKind::LifelongAnnuity, 3.0, q_ad).unwrap();
        let a = sim.estimate_policy_value(&one, &rate, 5000, 17).unwrap();
        let b = sim.estimate_policy_value(&three, &rate, 5000, 17).unwrap();
        assert!((b.value - 3.0 * a.value).abs() < 1e-12 * b.value.abs().max(1.0));
    }

    #[test]
    fn se_shrinks_with_path_count() {
        let sim = Simulator::new(&set(0.1, 0.05, 0.02), &grid()).unwrap();
        let q_ad = MortalitySurface::time_independent(IntensityCurve::constant(0.02).unwrap());
        let rate = ShortRate::new(IntensityCurve::constant(0.03).unwrap());
        let policy = PolicySpec::new(PolicyKind::LifelongAnnuity, 1.0, q_ad).unwrap();
        let small = sim.estimate_policy_value(&policy, &rate, 10_000, 5).unwrap();
        let large = sim.estimate_policy_value(&policy, &rate, 40_000, 5).unwrap();
        let ratio = small.std_error / large.std_error;
        assert!(
            (1.6..2.6).contains(&ratio),
            "SE should roughly halve from 10k to 40k paths, ratio {ratio}"
        );
    }
}
