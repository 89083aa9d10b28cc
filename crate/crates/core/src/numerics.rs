//! Shared numerical settings and small special-function helpers.

use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_factorial as statrs_ln_factorial;

/// Truncation and solver tolerances used throughout the crate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Numerics {
    /// Maximum probability mass that may be discarded when an infinite
    /// mixing vector is cut to finite length.
    pub series_epsilon: f64,
    /// Hard cap on the length of any mixing vector.
    pub k_max: usize,
    /// Absolute tolerance on `x` for quantile bisection.
    pub bisection_tolerance: f64,
}

impl Default for Numerics {
    fn default() -> Self {
        Self {
            series_epsilon: 1e-12,
            k_max: 20_000,
            bisection_tolerance: 1e-10,
        }
    }
}

/// Deviation from unit mass that is silently renormalized.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

/// Above this Poisson mean the pmf recurrence is run in log space.
const LOG_SPACE_LAMBDA: f64 = 600.0;

#[inline]
pub fn ln_factorial(n: u64) -> f64 {
    statrs_ln_factorial(n)
}

#[inline]
pub fn ln_binomial(n: u64, k: u64) -> f64 {
    debug_assert!(k <= n);
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}

/// Poisson probabilities `P(N = j)`, `j = 0..len`, for mean `lambda`.
///
/// Uses the running recurrence `p_{j+1} = p_j * lambda / (j + 1)`.
pub fn poisson_pmf(lambda: f64, len: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(len);
    if len == 0 {
        return out;
    }
    if lambda == 0.0 {
        out.push(1.0);
        out.resize(len, 0.0);
        return out;
    }
    if lambda < LOG_SPACE_LAMBDA {
        let mut term = (-lambda).exp();
        for j in 0..len {
            out.push(term);
            term *= lambda / (j + 1) as f64;
        }
    } else {
        let ln_lambda = lambda.ln();
        let mut ln_term = -lambda;
        for j in 0..len {
            out.push(ln_term.exp());
            ln_term += ln_lambda - ((j + 1) as f64).ln();
        }
    }
    out
}

/// `P(N >= k)` for `N ~ Poisson(lambda)`; equals the Erlang(k) df at `lambda / beta`.
pub fn poisson_upper_tail(lambda: f64, k: usize) -> f64 {
    if k == 0 {
        return 1.0;
    }
    if lambda == 0.0 {
        return 0.0;
    }
    if lambda < k as f64 {
        // Tail series converges geometrically once j > lambda.
        let ln_first = -lambda + k as f64 * lambda.ln() - ln_factorial(k as u64);
        let mut term = ln_first.exp();
        let mut sum = 0.0;
        let mut j = k;
        while term > 0.0 {
            sum += term;
            j += 1;
            term *= lambda / j as f64;
            if term < sum * 1e-17 {
                break;
            }
        }
        sum.min(1.0)
    } else {
        let lower: f64 = poisson_pmf(lambda, k).iter().sum();
        if lower < 1e-12 {
            1.0
        } else {
            (1.0 - lower).max(0.0)
        }
    }
}

/// Bisection for a nondecreasing `f`: returns the smallest `x` in `[lo, hi]`
/// with `f(x) >= target`, to absolute tolerance `tol`.
pub fn bisect_increasing<F: Fn(f64) -> f64>(f: F, target: f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) >= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Golden-section search for a maximum of a unimodal `f` on `[a, b]`.
pub fn golden_max<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..200 {
        if (b - a).abs() <= tol * (1.0 + a.abs() + b.abs()) {
            break;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    if fc >= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Adaptive Simpson quadrature on a finite interval.
pub fn integrate<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    #[allow(clippy::too_many_arguments)]
    fn recurse<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
                + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
        }
    }
    // Split first so narrow peaks are not missed by the initial estimate.
    let pieces = 64;
    let h = (b - a) / pieces as f64;
    (0..pieces)
        .map(|i| {
            let lo = a + i as f64 * h;
            let hi = lo + h;
            let (fa, fm, fb) = (f(lo), f(0.5 * (lo + hi)), f(hi));
            let whole = (hi - lo) / 6.0 * (fa + 4.0 * fm + fb);
            recurse(f, lo, hi, fa, fm, fb, whole, tol / pieces as f64, 40)
        })
        .sum()
}
