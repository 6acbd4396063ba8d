//! Batch command-line front-end.
//!
//! `pension-engine <command> --config scenario.toml [--out DIR] …` with the
//! commands `solve-marital`, `value`, `simulate`, `compare` and `g82-check`.
//! Exit codes: 0 success, 1 configuration/validation error, 2 numerical or
//! truncation failure, 3 comparison failure (some |z| > 4).

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Once;

use clap::{Args, Parser, Subcommand};

use crate::config::ScenarioConfig;
use crate::error::{EngineError, Result};
use crate::g82::g82_solve;
use crate::marital::{solve_marital, MaritalSolution};
use crate::quadrature::trapezoid_range;
use crate::report::{self, CompareRow};
use crate::simulator::Simulator;
use crate::valuation::{
    cashflow, liability, portfolio_value, truncation_tail_bound, ValuationReport,
};

/// Comparison failure threshold on z-scores.
const Z_FAIL: f64 = 4.0;

/// Bins enter the comparison only when the expected count supports the
/// normal approximation behind the z-score.
const MIN_EXPECTED_COUNT: f64 = 5.0;

const EXIT_OK: i32 = 0;
const EXIT_VALIDATION: i32 = 1;
const EXIT_NUMERICAL: i32 = 2;
const EXIT_COMPARISON: i32 = 3;

#[derive(Parser)]
#[command(
    name = "pension-engine",
    version,
    about = "Spouse's pension cashflow and liability engine"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the marital recursion and export g and f as CSV
    SolveMarital(CommonArgs),
    /// Project the cashflow and compute the liability
    Value(CommonArgs),
    /// Run the Monte Carlo simulator and export estimates
    Simulate(CommonArgs),
    /// Run analytic and Monte Carlo side by side and compare with z-scores
    Compare(CommonArgs),
    /// Check the age-parameterized solver against the general one
    G82Check(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Scenario configuration (TOML)
    #[arg(long)]
    config: PathBuf,
    /// Output directory
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override simulation.n_paths
    #[arg(long)]
    paths: Option<u64>,
    /// Override simulation.seed
    #[arg(long)]
    seed: Option<u64>,
    /// Override grid.step
    #[arg(long)]
    step: Option<f64>,
    /// Suppress progress output
    #[arg(long)]
    quiet: bool,
}

static RAYON_INIT: Once = Once::new();

/// Caps the worker pool from `PENSION_ENGINE_THREADS` (once per process).
fn init_threads() {
    RAYON_INIT.call_once(|| {
        if let Ok(v) = std::env::var("PENSION_ENGINE_THREADS") {
            if let Ok(n) = v.trim().parse::<usize>() {
                if n >= 1 {
                    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
                }
            }
        }
    });
}

/// Entry point used by the binary; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    init_threads();
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_VALIDATION,
            };
            let _ = e.print();
            return code;
        }
    };
    let outcome = match &cli.command {
        Command::SolveMarital(a) => cmd_solve_marital(a),
        Command::Value(a) => cmd_value(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Compare(a) => cmd_compare(a),
        Command::G82Check(a) => cmd_g82_check(a),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}

fn exit_code_for(e: &EngineError) -> i32 {
    match e {
        EngineError::Config(_)
        | EngineError::Validation(_)
        | EngineError::InvalidArgument(_)
        | EngineError::Io(_) => EXIT_VALIDATION,
        EngineError::Truncation { .. }
        | EngineError::Domain(_)
        | EngineError::GridMismatch(_)
        | EngineError::UndefinedConditional { .. }
        | EngineError::UnsupportedPolicy(_) => EXIT_NUMERICAL,
    }
}

/// Config with command-line overrides applied.
fn load_config(args: &CommonArgs) -> Result<ScenarioConfig> {
    let mut cfg = ScenarioConfig::from_file(&args.config)?;
    if let Some(step) = args.step {
        cfg.grid.step = step;
    }
    if let Some(paths) = args.paths {
        cfg.simulation.n_paths = paths;
    }
    if let Some(seed) = args.seed {
        cfg.simulation.seed = seed;
    }
    if !args.quiet {
        // A density whose grid quadrature drifts from unit mass (e.g. support
        // bounds off the step lattice) biases the analytic solution; the run
        // proceeds, but loudly.
        if let Ok(phi) = cfg.intensities.age_at_marriage.build() {
            for t in [0.0, 0.5 * cfg.grid.t_max, cfg.grid.t_max] {
                if !crate::intensity::validate_age_density(&phi, t, 1e-3) {
                    println!(
                        "warning: age-at-marriage density mass deviates from 1 at t = {t} \
                         under the grid quadrature; consider lattice-aligned support bounds"
                    );
                    break;
                }
            }
        }
    }
    Ok(cfg)
}

fn writer(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    std::fs::create_dir_all(dir)?;
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn note(args: &CommonArgs, message: &str) {
    if !args.quiet {
        println!("{message}");
    }
}

fn cmd_solve_marital(args: &CommonArgs) -> Result<i32> {
    let cfg = load_config(args)?;
    let grid = cfg.build_grid()?;
    let set = cfg.build_intensities()?;
    let solution = solve_marital(&set, &grid, &cfg.build_solver_options())?;

    let mut g_out = writer(&args.out, "g.csv")?;
    report::write_marriage_probability(&mut g_out, &solution, "t")?;
    g_out.flush()?;
    let mut f_out = writer(&args.out, "f.csv")?;
    report::write_spouse_age_density(&mut f_out, &solution, "t")?;
    f_out.flush()?;

    let defect = solution
        .conservation_defect()
        .iter()
        .fold(0.0f64, |a, d| a.max(d.abs()));
    note(
        args,
        &format!(
            "solved {} layers, residual {:.3e}, max conservation defect {:.3e}",
            solution.nu_used(),
            solution.truncation_residual(),
            defect
        ),
    );
    note(args, &format!("wrote {}/g.csv and f.csv", args.out.display()));
    Ok(EXIT_OK)
}

fn cmd_value(args: &CommonArgs) -> Result<i32> {
    let cfg = load_config(args)?;
    let grid = cfg.build_grid()?;
    let set = cfg.build_intensities()?;
    let rate = cfg.build_short_rate()?;
    let opts = cfg.build_solver_options();

    let members = cfg.build_portfolio()?;
    if !members.is_empty() {
        let report = portfolio_value(&set, &members, &rate, &grid, &opts)?;
        let mut out = writer(&args.out, "portfolio.csv")?;
        report::write_portfolio(&mut out, &report)?;
        out.flush()?;
        let mut summary = writer(&args.out, "summary.csv")?;
        writeln!(summary, "quantity,value")?;
        writeln!(summary, "portfolio_liability,{}", report::fmt(report.total))?;
        summary.flush()?;
        write_echo(&args.out, &cfg)?;
        note(args, &format!("portfolio liability {}", report::fmt(report.total)));
        return Ok(EXIT_OK);
    }

    let Some(policy) = cfg.build_policy()? else {
        return Err(EngineError::Config(
            "value needs a [policy] or a non-empty [portfolio]".into(),
        ));
    };
    let solution = solve_marital(&set, &grid, &opts)?;
    let cf = cashflow(&solution, &policy, &set.death, &grid)?;
    let l = liability(&cf, &rate)?;
    let report_data = ValuationReport {
        liability: l,
        cashflow: cf,
        tail_bound: truncation_tail_bound(&policy, &set.death, &rate, &grid)?,
    };

    let mut cf_out = writer(&args.out, "cashflow.csv")?;
    report::write_cashflow(&mut cf_out, &report_data.cashflow, &rate)?;
    cf_out.flush()?;
    let mut summary = writer(&args.out, "summary.csv")?;
    report::write_valuation_summary(&mut summary, &report_data)?;
    summary.flush()?;
    write_echo(&args.out, &cfg)?;
    note(args, &format!("liability {}", report::fmt(report_data.liability)));
    Ok(EXIT_OK)
}

/// Echo of the effective configuration (command-line overrides included).
fn write_echo(dir: &Path, cfg: &ScenarioConfig) -> Result<()> {
    let mut out = writer(dir, "echo.toml")?;
    out.write_all(cfg.to_toml()?.as_bytes())?;
    out.flush()?;
    Ok(())
}

fn cmd_simulate(args: &CommonArgs) -> Result<i32> {
    let cfg = load_config(args)?;
    let grid = cfg.build_grid()?;
    let set = cfg.build_intensities()?;
    let sim = Simulator::new(&set, &grid)?;
    let s = &cfg.simulation;
    let est = sim.estimate_marital(s.n_paths, &s.f_times, s.bin_width, s.seed)?;

    let mut g_out = writer(&args.out, "g_hat.csv")?;
    report::write_g_estimate(&mut g_out, &est)?;
    g_out.flush()?;
    let mut f_out = writer(&args.out, "f_hat.csv")?;
    report::write_f_estimate(&mut f_out, &est)?;
    f_out.flush()?;
    let mut h_out = writer(&args.out, "stopping_times.csv")?;
    report::write_stopping_time_hists(&mut h_out, &est)?;
    h_out.flush()?;

    if let Some(policy) = cfg.build_policy()? {
        let rate = cfg.build_short_rate()?;
        let pv = sim.estimate_policy_value(&policy, &rate, s.n_paths, s.seed)?;
        let mut out = writer(&args.out, "policy_value.csv")?;
        writeln!(out, "value,se,n_paths")?;
        writeln!(
            out,
            "{},{},{}",
            report::fmt(pv.value),
            report::fmt(pv.std_error),
            pv.n_paths
        )?;
        out.flush()?;
        note(
            args,
            &format!(
                "policy value {} ± {}",
                report::fmt(pv.value),
                report::fmt(pv.std_error)
            ),
        );
    }
    note(
        args,
        &format!("simulated {} paths into {}", s.n_paths, args.out.display()),
    );
    Ok(EXIT_OK)
}

/// Analytic bin probability `∫_lo^hi f(y|t_i) dy` on the solution grid.
fn analytic_bin_mass(solution: &MaritalSolution, i: usize, lo: f64, hi: f64) -> f64 {
    let grid = solution.grid();
    let g = solution.g_nodes()[i];
    if g < solution.g_floor() {
        return 0.0;
    }
    let f_row: Vec<f64> = (0..grid.n_y())
        .map(|j| solution.joint_density().get(i, j) / g)
        .collect();
    let j_lo = ((lo / grid.step()).round() as usize).min(grid.n_y() - 1);
    let j_hi = ((hi / grid.step()).round() as usize).min(grid.n_y() - 1);
    trapezoid_range(&f_row, grid.step(), j_lo, j_hi)
}

fn z_score(estimate: f64, expected: f64, se: f64) -> f64 {
    if se > 0.0 {
        (estimate - expected) / se
    } else if estimate == expected {
        0.0
    } else {
        f64::INFINITY
    }
}

fn cmd_compare(args: &CommonArgs) -> Result<i32> {
    let cfg = load_config(args)?;
    let grid = cfg.build_grid()?;
    let set = cfg.build_intensities()?;
    let opts = cfg.build_solver_options();
    let s = &cfg.simulation;

    let solution = solve_marital(&set, &grid, &opts)?;
    let sim = Simulator::new(&set, &grid)?;
    let est = sim.estimate_marital(s.n_paths, &s.f_times, s.bin_width, s.seed)?;

    let n = s.n_paths as f64;
    let mut rows: Vec<CompareRow> = Vec::new();

    // Marriage probability, null-hypothesis standard errors.
    for &t in &cfg.g_compare_times() {
        let i = ((t / grid.step()).round() as usize).min(grid.n_t() - 1);
        let analytic = solution.g_nodes()[i];
        let estimate = est.g_hat[i];
        let se = (analytic * (1.0 - analytic) / n).sqrt();
        rows.push(CompareRow {
            quantity: "g".into(),
            time: grid.t(i),
            bin_lo: None,
            bin_hi: None,
            analytic,
            estimate,
            std_error: se,
            z: z_score(estimate, analytic, se),
        });
    }

    // Spouse-age histogram bins with adequate expected counts.
    for f in &est.f_hat {
        let Some(hist) = &f.histogram else { continue };
        let i = ((f.time / grid.step()).round() as usize).min(grid.n_t() - 1);
        let n_married = f.n_married as f64;
        for b in 0..hist.counts.len() {
            let (lo, hi) = hist.edges(b);
            let q = analytic_bin_mass(&solution, i, lo, hi);
            if q * n_married < MIN_EXPECTED_COUNT {
                continue;
            }
            let p_hat = hist.counts[b] as f64 / n_married;
            let se = (q * (1.0 - q) / n_married).sqrt();
            rows.push(CompareRow {
                quantity: "f_bin".into(),
                time: grid.t(i),
                bin_lo: Some(lo),
                bin_hi: Some(hi),
                analytic: q,
                estimate: p_hat,
                std_error: se,
                z: z_score(p_hat, q, se),
            });
        }
    }

    // Policy value when a policy is configured.
    if let Some(policy) = cfg.build_policy()? {
        let rate = cfg.build_short_rate()?;
        let cf = cashflow(&solution, &policy, &set.death, &grid)?;
        let analytic = liability(&cf, &rate)?;
        let pv = sim.estimate_policy_value(&policy, &rate, s.n_paths, s.seed)?;
        rows.push(CompareRow {
            quantity: "liability".into(),
            time: grid.t_max(),
            bin_lo: None,
            bin_hi: None,
            analytic,
            estimate: pv.value,
            std_error: pv.std_error,
            z: z_score(pv.value, analytic, pv.std_error),
        });
    }

    let mut out = writer(&args.out, "compare.csv")?;
    report::write_comparison(&mut out, &rows)?;
    out.flush()?;

    let worst = rows.iter().map(|r| r.z.abs()).fold(0.0f64, f64::max);
    note(
        args,
        &format!("{} comparisons, worst |z| = {:.2}", rows.len(), worst),
    );
    if worst > Z_FAIL {
        eprintln!("comparison failure: |z| = {worst:.2} exceeds {Z_FAIL}");
        return Ok(EXIT_COMPARISON);
    }
    Ok(EXIT_OK)
}

fn cmd_g82_check(args: &CommonArgs) -> Result<i32> {
    let cfg = load_config(args)?;
    let Some(inputs) = cfg.build_g82()? else {
        return Err(EngineError::Config(
            "g82-check needs a [g82] section with a_min".into(),
        ));
    };
    let g82cfg = cfg.g82.clone().unwrap();
    let grid = cfg.build_grid()?;
    let opts = cfg.build_solver_options();

    let special = g82_solve(&inputs, &grid, &opts)?;
    let general = solve_marital(
        &inputs.as_intensity_set(cfg.intensities.death.build()?),
        &grid,
        &opts,
    )?;

    let mut max_dg = 0.0f64;
    for i in 0..grid.n_t() {
        max_dg = max_dg.max((special.g_nodes()[i] - general.g_nodes()[i]).abs());
    }
    let mut max_df = 0.0f64;
    for i in 0..grid.n_t() {
        let (gs, gg) = (special.g_nodes()[i], general.g_nodes()[i]);
        if gs < 1e-8 || gg < 1e-8 {
            continue;
        }
        for j in 0..grid.n_y() {
            let fs = special.joint_density().get(i, j) / gs;
            let fg = general.joint_density().get(i, j) / gg;
            max_df = max_df.max((fs - fg).abs());
        }
    }

    let mut g_out = writer(&args.out, "g.csv")?;
    report::write_marriage_probability(&mut g_out, &special, "x")?;
    g_out.flush()?;
    let mut f_out = writer(&args.out, "f.csv")?;
    report::write_spouse_age_density(&mut f_out, &special, "x")?;
    f_out.flush()?;
    let mut summary = writer(&args.out, "g82_check.csv")?;
    writeln!(summary, "quantity,value,tolerance")?;
    writeln!(summary, "max_abs_dg,{},{}", report::fmt(max_dg), report::fmt(g82cfg.tol_g))?;
    writeln!(summary, "max_abs_df,{},{}", report::fmt(max_df), report::fmt(g82cfg.tol_f))?;
    summary.flush()?;

    note(
        args,
        &format!("g82 equivalence: max |Δg| = {max_dg:.3e}, max |Δf| = {max_df:.3e}"),
    );
    if max_dg > g82cfg.tol_g || max_df > g82cfg.tol_f {
        eprintln!(
            "g82 equivalence failure: Δg {max_dg:.3e} (tol {}), Δf {max_df:.3e} (tol {})",
            g82cfg.tol_g, g82cfg.tol_f
        );
        return Ok(EXIT_NUMERICAL);
    }
    Ok(EXIT_OK)
}
