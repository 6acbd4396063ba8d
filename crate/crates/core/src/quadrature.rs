//! Composite trapezoid quadrature on uniform grids.
//!
//! Everything in the engine integrates with the trapezoid rule at the shared
//! grid step: the integrands are continuous but only piecewise smooth (the
//! age-at-marriage density may have kinks), where the rule is robust and
//! O(step^2) accurate.

/// Trapezoid integral of `values` sampled at uniform `step`.
pub fn trapezoid(values: &[f64], step: f64) -> f64 {
    trapezoid_range(values, step, 0, values.len().saturating_sub(1))
}

/// Smallest lattice multiple of `step` strictly greater than `x`.
///
/// Robust against division rounding: the returned edge is always `> x`, and
/// walking edges from any two points of the same lattice crosses identical
/// boundaries, so split integrals recombine exactly.
#[inline]
pub fn next_lattice_edge(x: f64, step: f64) -> f64 {
    let k = (x / step).floor() + 1.0;
    let edge = k * step;
    if edge > x {
        edge
    } else {
        (k + 1.0) * step
    }
}

/// Trapezoid integral over the node range `[lo, hi]` (inclusive indices).
pub fn trapezoid_range(values: &[f64], step: f64, lo: usize, hi: usize) -> f64 {
    if hi <= lo {
        return 0.0;
    }
    let mut sum = 0.5 * (values[lo] + values[hi]);
    for v in &values[lo + 1..hi] {
        sum += v;
    }
    sum * step
}

/// Running trapezoid integral: `out[i] = ∫_0^{t_i} values`.
pub fn cumulative_trapezoid(values: &[f64], step: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    out.push(0.0);
    for w in values.windows(2) {
        acc += 0.5 * step * (w[0] + w[1]);
        out.push(acc);
    }
    out
}

/// Hazard-decayed trapezoid sweep.
///
/// Computes, for every node index `i` of a uniform grid,
///
/// ```text
/// out[i] = ∫_{x_0}^{x_i} m(v) · exp(-(R(x_i) - R(v))) dv
/// ```
///
/// by composite trapezoid over the nodes, where `R` is a nondecreasing
/// cumulative hazard supplied through its per-cell increments
/// `hazard_increment(k) = R(x_{k+1}) - R(x_k) ≥ 0`.
///
/// The sweep advances the target point one cell at a time, multiplying the
/// partial sum by `exp(-increment)`; this reproduces the trapezoid sum exactly
/// while every exponential argument stays a single nonnegative cell increment,
/// never a quotient of two survival exponentials, so long horizons cannot
/// underflow intermediate terms.
pub fn decay_weighted_sweep(
    m: &[f64],
    step: f64,
    mut hazard_increment: impl FnMut(usize) -> f64,
) -> Vec<f64> {
    let n = m.len();
    let mut out = vec![0.0; n];
    if n == 0 {
        return out;
    }
    let half = 0.5 * step;
    let mut acc = 0.0;
    for i in 0..n - 1 {
        let decay = (-hazard_increment(i)).exp();
        acc = decay * (acc + half * m[i]) + half * m[i + 1];
        out[i + 1] = acc;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trapezoid_linear_is_exact() {
        let values: Vec<f64> = (0..=10).map(|i| 2.0 * i as f64 + 1.0).collect();
        // ∫_0^10 (2x + 1) dx = 110
        assert!((trapezoid(&values, 1.0) - 110.0).abs() < 1e-12);
    }

    #[test]
    fn trapezoid_empty_and_single() {
        assert_eq!(trapezoid(&[], 0.5), 0.0);
        assert_eq!(trapezoid(&[3.0], 0.5), 0.0);
    }

    #[test]
    fn cumulative_matches_total() {
        let values: Vec<f64> = (0..=100).map(|i| (i as f64 * 0.1).sin().abs()).collect();
        let cum = cumulative_trapezoid(&values, 0.1);
        assert!((cum[100] - trapezoid(&values, 0.1)).abs() < 1e-12);
        assert_eq!(cum[0], 0.0);
    }

    #[test]
    fn sweep_equals_direct_trapezoid() {
        // Against a direct evaluation of the same trapezoid sum.
        let step = 0.1;
        let n = 200;
        let m: Vec<f64> = (0..n).map(|k| (0.03 * k as f64).cos() + 1.5).collect();
        let rate = |k: usize| 0.02 + 0.001 * k as f64;
        let inc = |k: usize| 0.5 * step * (rate(k) + rate(k + 1));

        let cum: Vec<f64> = std::iter::once(0.0)
            .chain((0..n - 1).scan(0.0, |acc, k| {
                *acc += inc(k);
                Some(*acc)
            }))
            .collect();

        let swept = decay_weighted_sweep(&m, step, inc);
        for i in [1, 7, 50, 199] {
            let mut direct = 0.0;
            for k in 0..=i {
                let w = if k == 0 || k == i { 0.5 } else { 1.0 };
                direct += w * m[k] * (-(cum[i] - cum[k])).exp();
            }
            direct *= step;
            assert!(
                (swept[i] - direct).abs() < 1e-12 * direct.abs().max(1.0),
                "node {i}: sweep {} vs direct {direct}",
                swept[i]
            );
        }
    }

    #[test]
    fn sweep_with_zero_hazard_is_plain_integral() {
        let m = vec![1.0; 11];
        let out = decay_weighted_sweep(&m, 0.5, |_| 0.0);
        assert!((out[10] - 5.0).abs() < 1e-12);
    }
}
