//! Pearson correlation of a bivariate Sarmanov vector with mixed Erlang
//! marginals under four kernel families. For kernels `phi_i`,
//! `rho = alpha * E[X1 phi1(X1)] * E[X2 phi2(X2)] / (sigma1 sigma2)`.

use serde::Serialize;

use crate::erlang::erlang_cdf;
use crate::error::{Error, Result};
use crate::mixed_erlang::MixedErlang;
use crate::numerics::ln_binomial;
use crate::sarmanov::{alpha_bounds_from_ranges, AlphaBounds};
use crate::transforms::{expected_density, mu_tilde};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kernel", rename_all = "snake_case")]
pub enum KernelCase {
    /// `phi(x) = f(x) - E[f(X)]`.
    Density,
    /// `phi(x) = exp(-x) - E[exp(-X)]`.
    Exponential,
    /// `phi(x) = x - E[X]` on marginals truncated at `t1`, `t2`. When
    /// `truncated_moments` is false the untruncated mean and standard
    /// deviation are used in the bounds and the correlation.
    Linear { t1: f64, t2: f64, truncated_moments: bool },
    /// `phi(x) = 1 - 2 F(x)`.
    Fgm,
}

impl KernelCase {
    pub fn name(&self) -> &'static str {
        match self {
            KernelCase::Density => "density",
            KernelCase::Exponential => "exponential",
            KernelCase::Linear { .. } => "linear",
            KernelCase::Fgm => "fgm",
        }
    }

    /// Notes on truncation points that cut off noticeable tail mass.
    pub fn warnings(&self, d1: &MixedErlang, d2: &MixedErlang) -> Vec<String> {
        let KernelCase::Linear { t1, t2, .. } = *self else {
            return Vec::new();
        };
        [(1, d1, t1), (2, d2, t2)]
            .into_iter()
            .filter_map(|(i, d, t)| {
                let q = d.quantile(0.999).ok()?;
                (t < q).then(|| format!("truncation point {t} for X{i} is below its 0.999 quantile {q:.4}"))
            })
            .collect()
    }
}

/// What one marginal contributes: the kernel range `[-g, m - g]`,
/// `E[X phi(X)]` and the standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KernelMoments {
    pub g: f64,
    pub m: f64,
    pub cross: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RhoBounds {
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub rho_min: f64,
    pub rho_max: f64,
}

/// `E[X^m 1{X <= t}] = sum_k q_k k (k+1) ... (k+m-1) / beta^m * W_{k+m}(t)`.
fn truncated_raw_moment(d: &MixedErlang, m: u32, t: f64) -> Result<f64> {
    let beta = d.scale();
    d.weights().iter().enumerate().try_fold(0.0, |acc, (i, q)| {
        let k = i as u32 + 1;
        let rising: f64 = (0..m).map(|j| (k + j) as f64).product();
        Ok(acc + q * rising / beta.powi(m as i32) * erlang_cdf(k + m, beta, t)?)
    })
}

/// Mean and standard deviation of `X` conditioned on `X <= t`.
pub fn truncated_moments(d: &MixedErlang, t: f64) -> Result<(f64, f64)> {
    let mass = d.cdf(t)?;
    if !(mass > 0.0) {
        return Err(Error::Domain {
            name: "truncation point",
            value: t,
            reason: "leaves no probability mass",
        });
    }
    let m1 = truncated_raw_moment(d, 1, t)? / mass;
    let m2 = truncated_raw_moment(d, 2, t)? / mass;
    Ok((m1, (m2 - m1 * m1).max(0.0).sqrt()))
}

/// `E[exp(-X)]` and `E[X exp(-X)]`.
pub fn exponential_kernel_moments(d: &MixedErlang) -> (f64, f64) {
    let b = d.scale();
    let r = b / (b + 1.0);
    let mut laplace = 0.0;
    let mut weighted = 0.0;
    for (i, q) in d.weights().iter().enumerate() {
        let k = (i + 1) as f64;
        let rk = r.powf(k);
        laplace += q * rk;
        weighted += q * k * rk / (b + 1.0);
    }
    (laplace, weighted)
}

/// `E[min(X, X')] = integral of sf^2` for two independent copies.
pub fn expected_minimum(d: &MixedErlang) -> f64 {
    let q = d.weights();
    // tail[i] = mass on shapes above i
    let tail: Vec<f64> = (0..q.len()).map(|i| q[i..].iter().sum()).collect();
    let mut total = 0.0;
    for (i, ti) in tail.iter().enumerate() {
        for (j, tj) in tail.iter().enumerate() {
            let n = (i + j) as u64;
            total += ti * tj * (ln_binomial(n, i as u64) - n as f64 * std::f64::consts::LN_2).exp();
        }
    }
    total / (2.0 * d.scale())
}

pub fn kernel_moments(case: &KernelCase, d: &MixedErlang, which: usize) -> Result<KernelMoments> {
    let mu = d.mean();
    let sd = d.variance().sqrt();
    Ok(match *case {
        KernelCase::Density => {
            let gamma = expected_density(d);
            KernelMoments {
                g: gamma,
                m: d.pdf_max(),
                cross: gamma * (mu_tilde(d)? - mu),
                sd,
            }
        }
        KernelCase::Exponential => {
            let (laplace, weighted) = exponential_kernel_moments(d);
            KernelMoments {
                g: laplace,
                m: 1.0,
                cross: weighted - mu * laplace,
                sd,
            }
        }
        KernelCase::Linear {
            t1,
            t2,
            truncated_moments: truncated,
        } => {
            let t = if which == 0 { t1 } else { t2 };
            if !(t > 0.0) || !t.is_finite() {
                return Err(Error::Domain {
                    name: "truncation point",
                    value: t,
                    reason: "must be positive",
                });
            }
            let (mean, sd) = if truncated { truncated_moments(d, t)? } else { (mu, sd) };
            KernelMoments {
                g: mean,
                m: t,
                cross: sd * sd,
                sd,
            }
        }
        KernelCase::Fgm => KernelMoments {
            g: 1.0,
            m: 2.0,
            cross: expected_minimum(d) - mu,
            sd,
        },
    })
}

pub fn alpha_bounds(case: &KernelCase, d1: &MixedErlang, d2: &MixedErlang) -> Result<AlphaBounds> {
    let k1 = kernel_moments(case, d1, 0)?;
    let k2 = kernel_moments(case, d2, 1)?;
    Ok(alpha_bounds_from_ranges(k1.g, k1.m, k2.g, k2.m))
}

fn rho_per_alpha(k1: &KernelMoments, k2: &KernelMoments) -> f64 {
    k1.cross * k2.cross / (k1.sd * k2.sd)
}

pub fn pearson_rho(case: &KernelCase, d1: &MixedErlang, d2: &MixedErlang, alpha: f64) -> Result<f64> {
    let k1 = kernel_moments(case, d1, 0)?;
    let k2 = kernel_moments(case, d2, 1)?;
    let bounds = alpha_bounds_from_ranges(k1.g, k1.m, k2.g, k2.m);
    // Relative slack so that alpha exactly at a bound is accepted.
    let slack = 1e-12 * bounds.upper.abs().max(bounds.lower.abs());
    if alpha < bounds.lower - slack || alpha > bounds.upper + slack {
        return Err(Error::AlphaOutOfBounds {
            alpha,
            lower: bounds.lower,
            upper: bounds.upper,
        });
    }
    Ok(alpha * rho_per_alpha(&k1, &k2))
}

pub fn rho_bounds(case: &KernelCase, d1: &MixedErlang, d2: &MixedErlang) -> Result<RhoBounds> {
    let k1 = kernel_moments(case, d1, 0)?;
    let k2 = kernel_moments(case, d2, 1)?;
    let b = alpha_bounds_from_ranges(k1.g, k1.m, k2.g, k2.m);
    let r = rho_per_alpha(&k1, &k2);
    let (lo, hi) = (b.lower * r, b.upper * r);
    Ok(RhoBounds {
        alpha_min: b.lower,
        alpha_max: b.upper,
        rho_min: lo.min(hi),
        rho_max: lo.max(hi),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub beta: f64,
    #[serde(flatten)]
    pub bounds: RhoBounds,
}

/// Bounds with both marginals sharing the scale `beta`, for each grid value.
pub fn beta_sweep(case: &KernelCase, q1: &[f64], q2: &[f64], grid: &[f64]) -> Result<Vec<SweepRow>> {
    grid.iter()
        .map(|&beta| {
            let d1 = MixedErlang::new(beta, q1.to_vec())?;
            let d2 = MixedErlang::new(beta, q2.to_vec())?;
            Ok(SweepRow {
                beta,
                bounds: rho_bounds(case, &d1, &d2)?,
            })
        })
        .collect()
}

pub const SWEEP_HEADER: &str = "case,beta,alpha_min,alpha_max,rho_min,rho_max";

pub fn bounds_csv_row(case: &KernelCase, beta: Option<f64>, b: &RhoBounds, precision: usize) -> String {
    let beta = beta.map_or(String::new(), |x| format!("{x}"));
    format!(
        "{},{},{:.p$},{:.p$},{:.p$},{:.p$}",
        case.name(),
        beta,
        b.alpha_min,
        b.alpha_max,
        b.rho_min,
        b.rho_max,
        p = precision
    )
}

pub fn sweep_csv(case: &KernelCase, rows: &[SweepRow], precision: usize) -> String {
    let mut out = format!("{SWEEP_HEADER}\n");
    for r in rows {
        out.push_str(&bounds_csv_row(case, Some(r.beta), &r.bounds, precision));
        out.push('\n');
    }
    out
}
