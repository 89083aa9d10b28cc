//! Stop-loss reinsurance of dependent portfolios.
//!
//! For one mixed Erlang law `X` and a deductible `d`, the excess `(X - d)_+`
//! above its atom is a defective Erlang mixture with coefficients
//! `Delta_k = sum_j q_{j+k+1} P(N = j)`, `N ~ Poisson(beta d)`. Sums of
//! independent excesses convolve these sequences, and the Sarmanov joint law
//! is a signed combination of independent ones, so every quantity here ends
//! up as a signed Erlang mixture at the common rate.

use serde::Serialize;

use crate::aggregation::{AggregateRepresentation, AllocationReport};
use crate::erlang::{mixture_cdf, mixture_sf};
use crate::error::{check_level, check_nonneg, Error, Result};
use crate::mixed_erlang::MixedErlang;
use crate::numerics::{bisect_increasing, poisson_pmf};
use crate::sarmanov::SarmanovModel;

/// Subset enumeration is exponential in the number of portfolios.
pub const MAX_PORTFOLIOS: usize = 12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeltaSeries {
    pub coefficients: Vec<f64>,
    pub scale: f64,
    pub deductible: f64,
    /// `P(X > d)` of the source law.
    pub exceedance: f64,
}

impl DeltaSeries {
    pub fn mass(&self) -> f64 {
        self.coefficients.iter().sum()
    }
}

pub fn delta_series(d: &MixedErlang, deductible: f64) -> Result<DeltaSeries> {
    if !(deductible > 0.0) || !deductible.is_finite() {
        return Err(Error::Domain {
            name: "deductible",
            value: deductible,
            reason: "must be positive",
        });
    }
    let q = d.weights();
    let p = poisson_pmf(d.scale() * deductible, q.len());
    let mut coefficients: Vec<f64> = (0..q.len())
        .map(|k| q[k..].iter().zip(&p).map(|(qi, pj)| qi * pj).sum())
        .collect();
    while coefficients.len() > 1 && coefficients.last() == Some(&0.0) {
        coefficients.pop();
    }
    Ok(DeltaSeries {
        coefficients,
        scale: d.scale(),
        deductible,
        exceedance: d.sf(deductible)?,
    })
}

fn common_scale<'a, I: IntoIterator<Item = &'a DeltaSeries>>(series: I) -> Result<Option<f64>> {
    let mut scale = None;
    for s in series {
        match scale {
            None => scale = Some(s.scale),
            Some(b) if ((s.scale - b) / b).abs() > 1e-12 => {
                return Err(Error::ScaleMismatch {
                    expected: b,
                    found: s.scale,
                })
            }
            _ => {}
        }
    }
    Ok(scale)
}

fn total_shift(series: &[&DeltaSeries]) -> Vec<f64> {
    series
        .iter()
        .fold(vec![1.0], |acc, s| convolve_shift(&acc, &s.coefficients))
}

// Convolution indexed from 0 (total shift), unlike mixing-weight convolution.
fn convolve_shift(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        if *x == 0.0 {
            continue;
        }
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Coefficients `c` with `H(y) = sum_i c[i] W_{i+1}(y)`.
fn h_coefficients(series: &[&DeltaSeries]) -> Vec<f64> {
    let k = series.len();
    let shift = total_shift(series);
    let mut out = vec![0.0; k - 1];
    out.extend(shift);
    out
}

/// Coefficients `c` with `beta * U(y) = sum_i c[i] Wbar_{i+1}(y)`.
fn u_coefficients(others: &[&DeltaSeries], last: &DeltaSeries) -> Vec<f64> {
    let k = others.len();
    let weighted: Vec<f64> = last
        .coefficients
        .iter()
        .enumerate()
        .map(|(h, v)| (h + 1) as f64 * v)
        .collect();
    let shift = convolve_shift(&total_shift(others), &weighted);
    let mut out = vec![0.0; k + 1];
    out.extend(shift);
    out
}

/// `P(X_i > d_i for all i, sum_i (X_i - d_i) <= y)` for independent sources.
pub fn defective_df_h(series: &[DeltaSeries], y: f64) -> Result<f64> {
    check_nonneg("y", y)?;
    let Some(scale) = common_scale(series)? else {
        return Ok(1.0);
    };
    let refs: Vec<&DeltaSeries> = series.iter().collect();
    Ok(mixture_cdf(&h_coefficients(&refs), scale, y))
}

/// `E[(X_l - d_l) 1{X_i > d_i for all i, sum_i (X_i - d_i) > y}]` where `l`
/// is `last` and the others are `series`. With no others this is the
/// single-law partial expectation; at `y = 0` it includes the whole excess.
pub fn partial_expectation_u(series: &[DeltaSeries], last: &DeltaSeries, y: f64) -> Result<f64> {
    check_nonneg("y", y)?;
    let scale = common_scale(series.iter().chain(std::iter::once(last)))?.unwrap_or(last.scale);
    let refs: Vec<&DeltaSeries> = series.iter().collect();
    Ok(mixture_sf(&u_coefficients(&refs, last), scale, y) / scale)
}

/// The law of `R = sum_i (S_i - d_i)_+`, compiled into signed Erlang
/// mixtures at the common rate.
#[derive(Debug, Clone, PartialEq)]
pub struct ReinsuredLaw {
    deductibles: Vec<f64>,
    scale: f64,
    atom: f64,
    df_coefficients: Vec<f64>,
    /// Per portfolio, coefficients of `beta * E[T_l 1{R > y}]` against `Wbar`.
    allocation_coefficients: Vec<Vec<f64>>,
    /// Marginal laws of the portfolio sums, used to bracket quantiles.
    base: Vec<MixedErlang>,
    tolerance: f64,
}

fn accumulate(target: &mut Vec<f64>, weight: f64, v: &[f64]) {
    if target.len() < v.len() {
        target.resize(v.len(), 0.0);
    }
    for (t, x) in target.iter_mut().zip(v) {
        *t += weight * x;
    }
}

impl ReinsuredLaw {
    pub fn new(model: &SarmanovModel, deductibles: &[f64]) -> Result<Self> {
        let n = model.portfolio_count();
        if n > MAX_PORTFOLIOS {
            return Err(Error::TooManyPortfolios {
                portfolios: n,
                cap: MAX_PORTFOLIOS,
            });
        }
        if deductibles.len() != n {
            return Err(Error::Model(format!("expected {n} deductibles, got {}", deductibles.len())));
        }
        let rep = AggregateRepresentation::build(model)?;
        let scale = rep.common_scale;
        let mut atom = 0.0;
        let mut df_coefficients = Vec::new();
        let mut allocation_coefficients = vec![Vec::new(); n];

        for term in rep.signed_terms() {
            let series = term
                .laws
                .iter()
                .zip(deductibles)
                .map(|(law, d)| delta_series(law, *d))
                .collect::<Result<Vec<_>>>()?;
            let below = term
                .laws
                .iter()
                .zip(deductibles)
                .map(|(law, d)| law.cdf(*d))
                .collect::<Result<Vec<_>>>()?;
            atom += term.weight * below.iter().product::<f64>();

            for mask in 1u32..(1 << n) {
                let members: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
                let rest: f64 = (0..n).filter(|i| mask & (1 << i) == 0).map(|i| below[i]).product();
                if rest == 0.0 {
                    continue;
                }
                let refs: Vec<&DeltaSeries> = members.iter().map(|&i| &series[i]).collect();
                accumulate(&mut df_coefficients, term.weight * rest, &h_coefficients(&refs));
                // Each member in turn plays the role of the allocated portfolio.
                for (pos, &l) in members.iter().enumerate() {
                    let mut others = refs.clone();
                    let last = others.remove(pos);
                    accumulate(
                        &mut allocation_coefficients[l],
                        term.weight * rest,
                        &u_coefficients(&others, last),
                    );
                }
            }
        }
        Ok(Self {
            deductibles: deductibles.to_vec(),
            scale,
            atom,
            df_coefficients,
            allocation_coefficients,
            base: rep.base,
            tolerance: model.numerics().bisection_tolerance,
        })
    }

    pub fn deductibles(&self) -> &[f64] {
        &self.deductibles
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// `P(R = 0)`, the joint df of the portfolio sums at the deductibles.
    pub fn atom(&self) -> f64 {
        self.atom
    }

    pub fn df(&self, y: f64) -> Result<f64> {
        check_nonneg("y", y)?;
        Ok(self.atom + mixture_cdf(&self.df_coefficients, self.scale, y))
    }

    /// `E[T_l 1{R > y}]` for portfolio `l` (0-based).
    pub fn tail_contribution(&self, l: usize, y: f64) -> Result<f64> {
        check_nonneg("y", y)?;
        let c = self
            .allocation_coefficients
            .get(l)
            .ok_or_else(|| Error::Model(format!("portfolio {} does not exist", l + 1)))?;
        Ok(mixture_sf(c, self.scale, y) / self.scale)
    }

    /// `(VaR_p(R), at_atom)`; the quantile is 0 when `p` does not exceed the atom.
    pub fn var(&self, p: f64) -> Result<(f64, bool)> {
        check_level(p)?;
        if p <= self.atom {
            return Ok((0.0, true));
        }
        let n = self.base.len();
        let level = 1.0 - (1.0 - p) / (2.0 * n as f64);
        let mut hi = self
            .base
            .iter()
            .map(|law| law.quantile(level))
            .sum::<Result<f64>>()?
            .max(1.0);
        let df = |y: f64| self.atom + mixture_cdf(&self.df_coefficients, self.scale, y);
        let mut doublings = 0;
        while df(hi) < p {
            hi *= 2.0;
            doublings += 1;
            if doublings > 200 {
                return Err(Error::Bracket { p, mass: df(hi) });
            }
        }
        Ok((bisect_increasing(df, p, 0.0, hi, self.tolerance), false))
    }

    pub fn allocate(&self, p: f64) -> Result<AllocationReport> {
        let (var, at_atom) = self.var(p)?;
        let capitals = (0..self.base.len())
            .map(|l| Ok(self.tail_contribution(l, var)? / (1.0 - p)))
            .collect::<Result<Vec<_>>>()?;
        let tvar = capitals.iter().sum();
        Ok(AllocationReport::from_parts(p, var, tvar, capitals, at_atom))
    }
}

pub fn reinsured_df(model: &SarmanovModel, deductibles: &[f64], y: f64) -> Result<f64> {
    ReinsuredLaw::new(model, deductibles)?.df(y)
}

pub fn reinsured_var(model: &SarmanovModel, deductibles: &[f64], p: f64) -> Result<(f64, bool)> {
    ReinsuredLaw::new(model, deductibles)?.var(p)
}

pub fn reinsured_allocate(model: &SarmanovModel, deductibles: &[f64], p: f64) -> Result<AllocationReport> {
    ReinsuredLaw::new(model, deductibles)?.allocate(p)
}

/// CSV rows `p,VaR,C_1..C_n,TVaR`, one per report.
pub fn reinsurance_csv(reports: &[AllocationReport], precision: usize) -> String {
    let n = reports.first().map_or(0, |r| r.contributions.len());
    let mut out = String::from("p,VaR");
    for l in 1..=n {
        out.push_str(&format!(",C_{l}"));
    }
    out.push_str(",TVaR\n");
    for r in reports {
        out.push_str(&format!("{},{:.prec$}", r.p, r.var, prec = precision));
        for c in &r.contributions {
            out.push_str(&format!(",{:.prec$}", c.capital, prec = precision));
        }
        out.push_str(&format!(",{:.prec$}\n", r.tvar, prec = precision));
    }
    out
}
