//! CSV report writers.
//!
//! Numbers are written in Rust's shortest round-trip decimal form (the value
//! is recoverable bit for bit), headers are mandatory, and rows follow grid
//! order, so identical inputs produce byte-identical files.

use std::io::Write;

use crate::error::Result;
use crate::marital::MaritalSolution;
use crate::simulator::SimulationEstimate;
use crate::valuation::{CashflowCurve, PortfolioReport, ShortRate, ValuationReport};

/// Shortest round-trip decimal representation.
pub fn fmt(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else if x.is_infinite() {
        (if x > 0.0 { "inf" } else { "-inf" }).to_string()
    } else {
        format!("{x}")
    }
}

/// `t, g(t)` over the time grid. `axis` names the time column (`t`, or `x`
/// in age-parameterized runs).
pub fn write_marriage_probability(
    out: &mut dyn Write,
    solution: &MaritalSolution,
    axis: &str,
) -> Result<()> {
    writeln!(out, "{axis},g")?;
    let grid = solution.grid();
    for (i, g) in solution.g_nodes().iter().enumerate() {
        writeln!(out, "{},{}", fmt(grid.t(i)), fmt(*g))?;
    }
    Ok(())
}

/// Long-format `t, y, f(y|t)` block, skipping times where the conditional
/// density is undefined.
pub fn write_spouse_age_density(
    out: &mut dyn Write,
    solution: &MaritalSolution,
    axis: &str,
) -> Result<()> {
    writeln!(out, "{axis},y,f")?;
    let grid = solution.grid();
    for i in 0..grid.n_t() {
        let g = solution.g_nodes()[i];
        if g < solution.g_floor() {
            continue;
        }
        for j in 0..grid.n_y() {
            let f = solution.joint_density().get(i, j) / g;
            writeln!(out, "{},{},{}", fmt(grid.t(i)), fmt(grid.y(j)), fmt(f))?;
        }
    }
    Ok(())
}

/// `t, a, A, discount, discounted_a` over the time grid.
pub fn write_cashflow(
    out: &mut dyn Write,
    cf: &CashflowCurve,
    rate: &ShortRate,
) -> Result<()> {
    writeln!(out, "t,a,A,discount,discounted_a")?;
    let grid = cf.grid();
    for i in 0..grid.n_t() {
        let t = grid.t(i);
        let a = cf.rates()[i];
        let disc = rate.discount(t)?;
        writeln!(
            out,
            "{},{},{},{},{}",
            fmt(t),
            fmt(a),
            fmt(cf.cumulative()[i]),
            fmt(disc),
            fmt(disc * a)
        )?;
    }
    Ok(())
}

/// Key/value summary with the liability and horizon diagnostics.
pub fn write_valuation_summary(out: &mut dyn Write, report: &ValuationReport) -> Result<()> {
    writeln!(out, "quantity,value")?;
    writeln!(out, "liability,{}", fmt(report.liability))?;
    writeln!(out, "total_expected_payments,{}", fmt(report.cashflow.total()))?;
    writeln!(out, "horizon_tail_bound,{}", fmt(report.tail_bound))?;
    Ok(())
}

pub fn write_portfolio(out: &mut dyn Write, report: &PortfolioReport) -> Result<()> {
    writeln!(out, "age,weight,liability,weighted_liability")?;
    for m in &report.members {
        writeln!(
            out,
            "{},{},{},{}",
            fmt(m.age),
            fmt(m.weight),
            fmt(m.liability),
            fmt(m.weight * m.liability)
        )?;
    }
    Ok(())
}

/// `t, g_hat, se` over the time grid.
pub fn write_g_estimate(out: &mut dyn Write, est: &SimulationEstimate) -> Result<()> {
    writeln!(out, "t,g_hat,se")?;
    for i in 0..est.grid.n_t() {
        writeln!(
            out,
            "{},{},{}",
            fmt(est.grid.t(i)),
            fmt(est.g_hat[i]),
            fmt(est.g_se[i])
        )?;
    }
    Ok(())
}

/// Spouse-age histograms at every requested time, long format with bin edges.
pub fn write_f_estimate(out: &mut dyn Write, est: &SimulationEstimate) -> Result<()> {
    writeln!(out, "t,bin_lo,bin_hi,density,se,n_married")?;
    for f in &est.f_hat {
        let Some(hist) = &f.histogram else { continue };
        for b in 0..hist.counts.len() {
            let (lo, hi) = hist.edges(b);
            writeln!(
                out,
                "{},{},{},{},{},{}",
                fmt(f.time),
                fmt(lo),
                fmt(hi),
                fmt(hist.density(b)),
                fmt(hist.se_density(b)),
                f.n_married
            )?;
        }
    }
    Ok(())
}

/// Stopping-time histograms (`kind` = `marriage` or `single`), one row per
/// nonzero-capable bin with the remarriage index.
pub fn write_stopping_time_hists(out: &mut dyn Write, est: &SimulationEstimate) -> Result<()> {
    writeln!(out, "kind,nu,bin_lo,bin_hi,density,se")?;
    for (kind, hists) in [
        ("marriage", &est.marriage_time_hists),
        ("single", &est.single_time_hists),
    ] {
        for (idx, hist) in hists.iter().enumerate() {
            for b in 0..hist.counts.len() {
                let (lo, hi) = hist.edges(b);
                writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    kind,
                    idx + 1,
                    fmt(lo),
                    fmt(hi),
                    fmt(hist.density(b)),
                    fmt(hist.se_density(b))
                )?;
            }
        }
    }
    Ok(())
}

/// One analytic-vs-simulation comparison row.
pub struct CompareRow {
    pub quantity: String,
    pub time: f64,
    pub bin_lo: Option<f64>,
    pub bin_hi: Option<f64>,
    pub analytic: f64,
    pub estimate: f64,
    pub std_error: f64,
    pub z: f64,
}

pub fn write_comparison(out: &mut dyn Write, rows: &[CompareRow]) -> Result<()> {
    writeln!(out, "quantity,time,bin_lo,bin_hi,analytic,estimate,se,z")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.quantity,
            fmt(r.time),
            r.bin_lo.map(fmt).unwrap_or_default(),
            r.bin_hi.map(fmt).unwrap_or_default(),
            fmt(r.analytic),
            fmt(r.estimate),
            fmt(r.std_error),
            fmt(r.z)
        )?;
    }
    Ok(())
}
