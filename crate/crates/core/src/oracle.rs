//! Monte Carlo ground truth by exact rejection sampling.
//!
//! Proposals are independent draws from the marginals; a proposal is
//! accepted with probability `bracket / c` where `c` bounds the density
//! bracket from above. The stream is cut into chunks of `batch_size` draws
//! and chunk `i` uses ChaCha stream `i` under the configured seed, so results
//! do not depend on how chunks are scheduled across threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_level, Error, Result};
use crate::numerics::ln_factorial;
use crate::sarmanov::SarmanovModel;

/// Number of groups for batch-means standard errors.
pub const BATCHES: usize = 30;
pub const MIN_SAMPLES: u64 = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    pub sample_count: u64,
    pub seed: u64,
    pub batch_size: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            sample_count: 1_000_000,
            seed: 20_260_101,
            batch_size: 10_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentKind {
    Mean,
    Variance,
    Skewness,
    Kurtosis,
}

/// Estimands. Risks are addressed by their 0-based flat index and
/// portfolios by their 0-based position; `S` is the sum of all risks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Target {
    /// `P(S_1 <= s_1, ..., S_n <= s_n)` over portfolio sums.
    JointDf { s: Vec<f64> },
    AggregateCdf { y: f64 },
    AggregateMoment { moment: MomentKind },
    RiskMoment { risk: usize, moment: MomentKind },
    Correlation { first: usize, second: usize },
    AggregateVar { p: f64 },
    AggregateTvar { p: f64 },
    /// `E[X_j 1{S > VaR_p(S)}] / (1 - p)`.
    Allocation { p: f64, risk: usize },
    ReinsuredVar { p: f64, deductibles: Vec<f64> },
    ReinsuredTvar { p: f64, deductibles: Vec<f64> },
    /// `E[T_l 1{R > VaR_p(R)}] / (1 - p)` with `T_l = (S_l - d_l)_+`.
    ReinsuredAllocation { p: f64, portfolio: usize, deductibles: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleReport {
    pub target: Target,
    pub estimate: f64,
    pub std_error: f64,
    pub samples: u64,
    pub seed: u64,
}

impl OracleReport {
    /// `|value - estimate| / std_error`.
    pub fn z_score(&self, value: f64) -> f64 {
        let diff = (value - self.estimate).abs();
        if self.std_error > 0.0 {
            diff / self.std_error
        } else if diff == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

// Allocation-free marginal evaluation for the hot loop.
struct FastMarginal {
    beta: f64,
    weights: Vec<f64>,
    cumulative: Vec<f64>,
    ln_fact: Vec<f64>,
    gamma: f64,
}

impl FastMarginal {
    fn pdf(&self, x: f64) -> f64 {
        let bx = self.beta * x;
        let mut s = 0.0;
        if bx < 500.0 {
            let mut term = (-bx).exp();
            for (k, q) in self.weights.iter().enumerate() {
                if k > 0 {
                    term *= bx / k as f64;
                }
                s += q * term;
            }
        } else {
            let lbx = bx.ln();
            for (k, q) in self.weights.iter().enumerate() {
                if *q > 0.0 {
                    s += q * (k as f64 * lbx - bx - self.ln_fact[k]).exp();
                }
            }
        }
        self.beta * s
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> f64 {
        let u = rng.random::<f64>() * self.cumulative[self.cumulative.len() - 1];
        let shape = self.cumulative.partition_point(|c| *c <= u).min(self.weights.len() - 1) + 1;
        let mut s = 0.0;
        for _ in 0..shape {
            s -= (1.0 - rng.random::<f64>()).ln();
        }
        s / self.beta
    }
}

struct Sampler<'a> {
    model: &'a SarmanovModel,
    marginals: Vec<FastMarginal>,
    envelope: f64,
}

impl<'a> Sampler<'a> {
    fn new(model: &'a SarmanovModel) -> Self {
        let marginals = model
            .marginals()
            .zip(model.risks())
            .map(|(d, r)| {
                let weights = d.weights().to_vec();
                let mut acc = 0.0;
                let cumulative = weights
                    .iter()
                    .map(|w| {
                        acc += w;
                        acc
                    })
                    .collect();
                let ln_fact = (0..weights.len()).map(|k| ln_factorial(k as u64)).collect();
                FastMarginal {
                    beta: d.scale(),
                    weights,
                    cumulative,
                    ln_fact,
                    gamma: r.gamma,
                }
            })
            .collect();
        Self {
            model,
            marginals,
            envelope: model.envelope_constant(),
        }
    }

    /// Fills `out` with `rows` accepted draws; returns the number of proposals.
    fn chunk(&self, seed: u64, index: u64, rows: usize, out: &mut Vec<f64>) -> Result<u64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index);
        let zeta = self.marginals.len();
        let mut x = vec![0.0; zeta];
        let mut phi = vec![0.0; zeta];
        let mut proposals = 0;
        let mut accepted = 0;
        let dependent = !self.model.pairs().is_empty();
        while accepted < rows {
            proposals += 1;
            for (i, m) in self.marginals.iter().enumerate() {
                x[i] = m.draw(&mut rng);
            }
            if dependent {
                for (i, m) in self.marginals.iter().enumerate() {
                    phi[i] = m.pdf(x[i]) - m.gamma;
                }
                let bracket = self.model.bracket_from_kernels(&phi);
                if bracket > self.envelope * (1.0 + 1e-12) {
                    return Err(Error::Envelope {
                        bracket,
                        envelope: self.envelope,
                    });
                }
                if rng.random::<f64>() * self.envelope >= bracket {
                    continue;
                }
            }
            out.extend_from_slice(&x);
            accepted += 1;
        }
        Ok(proposals)
    }

    /// Draws chunks `first..first + count`; the last chunk may be cut to `last_rows`.
    fn chunks(&self, cfg: &OracleConfig, first: u64, count: u64, last_rows: usize) -> Result<(Vec<f64>, u64)> {
        let run = |c: u64| -> Result<(Vec<f64>, u64)> {
            let rows = if c + 1 == first + count { last_rows } else { cfg.batch_size };
            let mut out = Vec::with_capacity(rows * self.marginals.len());
            let n = self.chunk(cfg.seed, c, rows, &mut out)?;
            Ok((out, n))
        };
        #[cfg(feature = "parallel")]
        let parts: Vec<Result<(Vec<f64>, u64)>> = {
            use rayon::prelude::*;
            (first..first + count).into_par_iter().map(run).collect()
        };
        #[cfg(not(feature = "parallel"))]
        let parts: Vec<Result<(Vec<f64>, u64)>> = (first..first + count).map(run).collect();
        let mut rows = Vec::new();
        let mut proposals = 0;
        for part in parts {
            let (r, n) = part?;
            rows.extend(r);
            proposals += n;
        }
        Ok((rows, proposals))
    }
}

fn check_config(cfg: &OracleConfig) -> Result<()> {
    if cfg.batch_size == 0 {
        return Err(Error::Domain {
            name: "batch_size",
            value: 0.0,
            reason: "must be positive",
        });
    }
    Ok(())
}

/// Draws from the joint law; row-major with one row of all risks per draw.
pub fn sample(model: &SarmanovModel, cfg: &OracleConfig) -> Result<Vec<Vec<f64>>> {
    Ok(sample_with_rate(model, cfg)?.0)
}

/// Draws plus the observed acceptance rate.
pub fn sample_with_rate(model: &SarmanovModel, cfg: &OracleConfig) -> Result<(Vec<Vec<f64>>, f64)> {
    check_config(cfg)?;
    let zeta = model.risk_count();
    let n = cfg.sample_count;
    if n == 0 {
        return Ok((Vec::new(), 1.0));
    }
    let bs = cfg.batch_size as u64;
    let count = n.div_ceil(bs);
    let last_rows = (n - (count - 1) * bs) as usize;
    let (flat, proposals) = Sampler::new(model).chunks(cfg, 0, count, last_rows)?;
    let rows = flat.chunks(zeta).map(<[f64]>::to_vec).collect();
    Ok((rows, n as f64 / proposals as f64))
}

// Smallest order statistic with empirical df >= p.
fn empirical_quantile(values: &mut [f64], p: f64) -> f64 {
    let n = values.len();
    let k = ((n as f64 * p).ceil() as usize).clamp(1, n) - 1;
    let (_, v, _) = values.select_nth_unstable_by(k, |a, b| a.total_cmp(b));
    *v
}

fn moment(values: &[f64], kind: MomentKind) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let central = |r: i32| values.iter().map(|v| (v - mean).powi(r)).sum::<f64>() / n;
    match kind {
        MomentKind::Mean => mean,
        MomentKind::Variance => central(2),
        MomentKind::Skewness => central(3) / central(2).powf(1.5),
        MomentKind::Kurtosis => central(4) / central(2).powi(2),
    }
}

struct Layout {
    zeta: usize,
    portfolio_ranges: Vec<std::ops::Range<usize>>,
}

impl Layout {
    fn new(model: &SarmanovModel) -> Self {
        let mut start = 0;
        let portfolio_ranges = model
            .portfolios()
            .iter()
            .map(|p| {
                let r = start..start + p.len();
                start += p.len();
                r
            })
            .collect();
        Self {
            zeta: model.risk_count(),
            portfolio_ranges,
        }
    }

    fn rows<'a>(&self, flat: &'a [f64]) -> impl Iterator<Item = &'a [f64]> {
        flat.chunks(self.zeta)
    }

    fn excesses(&self, row: &[f64], d: &[f64]) -> Vec<f64> {
        self.portfolio_ranges
            .iter()
            .zip(d)
            .map(|(r, d)| (row[r.clone()].iter().sum::<f64>() - d).max(0.0))
            .collect()
    }
}

fn tail_mean(total: &[f64], part: &[f64], threshold: f64, p: f64) -> f64 {
    let n = total.len() as f64;
    total
        .iter()
        .zip(part)
        .filter(|(t, _)| **t > threshold)
        .map(|(_, v)| v)
        .sum::<f64>()
        / (n * (1.0 - p))
}

fn batch_statistic(target: &Target, layout: &Layout, flat: &[f64]) -> Result<f64> {
    let totals = || layout.rows(flat).map(|r| r.iter().sum::<f64>()).collect::<Vec<_>>();
    let n = (flat.len() / layout.zeta) as f64;
    Ok(match target {
        Target::JointDf { s } => {
            let hits = layout
                .rows(flat)
                .filter(|row| {
                    layout
                        .portfolio_ranges
                        .iter()
                        .zip(s)
                        .all(|(r, s)| row[r.clone()].iter().sum::<f64>() <= *s)
                })
                .count();
            hits as f64 / n
        }
        Target::AggregateCdf { y } => totals().iter().filter(|t| **t <= *y).count() as f64 / n,
        Target::AggregateMoment { moment: k } => moment(&totals(), *k),
        Target::RiskMoment { risk, moment: k } => {
            let v: Vec<f64> = layout.rows(flat).map(|r| r[*risk]).collect();
            moment(&v, *k)
        }
        Target::Correlation { first, second } => {
            let a: Vec<f64> = layout.rows(flat).map(|r| r[*first]).collect();
            let b: Vec<f64> = layout.rows(flat).map(|r| r[*second]).collect();
            let (ma, mb) = (moment(&a, MomentKind::Mean), moment(&b, MomentKind::Mean));
            let cov = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / n;
            cov / (moment(&a, MomentKind::Variance) * moment(&b, MomentKind::Variance)).sqrt()
        }
        Target::AggregateVar { p } => empirical_quantile(&mut totals(), *p),
        Target::AggregateTvar { p } => {
            let t = totals();
            let var = empirical_quantile(&mut t.clone(), *p);
            tail_mean(&t, &t, var, *p)
        }
        Target::Allocation { p, risk } => {
            let t = totals();
            let var = empirical_quantile(&mut t.clone(), *p);
            let x: Vec<f64> = layout.rows(flat).map(|r| r[*risk]).collect();
            tail_mean(&t, &x, var, *p)
        }
        Target::ReinsuredVar { p, deductibles } => {
            let mut r: Vec<f64> = layout
                .rows(flat)
                .map(|row| layout.excesses(row, deductibles).iter().sum())
                .collect();
            empirical_quantile(&mut r, *p)
        }
        Target::ReinsuredTvar { p, deductibles } => {
            let r: Vec<f64> = layout
                .rows(flat)
                .map(|row| layout.excesses(row, deductibles).iter().sum())
                .collect();
            let var = empirical_quantile(&mut r.clone(), *p);
            tail_mean(&r, &r, var, *p)
        }
        Target::ReinsuredAllocation {
            p,
            portfolio,
            deductibles,
        } => {
            let ex: Vec<Vec<f64>> = layout.rows(flat).map(|row| layout.excesses(row, deductibles)).collect();
            let r: Vec<f64> = ex.iter().map(|e| e.iter().sum()).collect();
            let t: Vec<f64> = ex.iter().map(|e| e[*portfolio]).collect();
            let var = empirical_quantile(&mut r.clone(), *p);
            tail_mean(&r, &t, var, *p)
        }
    })
}

fn check_target(target: &Target, model: &SarmanovModel) -> Result<()> {
    let zeta = model.risk_count();
    let n = model.portfolio_count();
    let bad = |what: String| Err(Error::Model(what));
    let risk_ok = |r: usize| r < zeta;
    match target {
        Target::JointDf { s } if s.len() != n => bad(format!("expected {n} coordinates, got {}", s.len())),
        Target::RiskMoment { risk, .. } | Target::Allocation { risk, .. } if !risk_ok(*risk) => {
            bad(format!("risk {} does not exist", risk + 1))
        }
        Target::Correlation { first, second } if !risk_ok(*first) || !risk_ok(*second) => {
            bad("correlation refers to a missing risk".into())
        }
        Target::ReinsuredVar { deductibles, .. }
        | Target::ReinsuredTvar { deductibles, .. }
        | Target::ReinsuredAllocation { deductibles, .. }
            if deductibles.len() != n =>
        {
            bad(format!("expected {n} deductibles, got {}", deductibles.len()))
        }
        Target::ReinsuredAllocation { portfolio, .. } if *portfolio >= n => {
            bad(format!("portfolio {} does not exist", portfolio + 1))
        }
        Target::AggregateVar { p }
        | Target::AggregateTvar { p }
        | Target::Allocation { p, .. }
        | Target::ReinsuredVar { p, .. }
        | Target::ReinsuredTvar { p, .. }
        | Target::ReinsuredAllocation { p, .. } => check_level(*p),
        _ => Ok(()),
    }
}

/// Estimates every target from one shared sample. Each of the
/// [`BATCHES`] groups yields a plug-in estimate; the report carries their
/// mean and its standard error.
pub fn estimate_many(model: &SarmanovModel, cfg: &OracleConfig, targets: &[Target]) -> Result<Vec<OracleReport>> {
    check_config(cfg)?;
    if cfg.sample_count < MIN_SAMPLES {
        return Err(Error::Domain {
            name: "sample_count",
            value: cfg.sample_count as f64,
            reason: "estimates need at least 10000 samples",
        });
    }
    for t in targets {
        check_target(t, model)?;
    }
    let bs = cfg.batch_size as u64;
    // Every group holds `per_batch` draws; its last chunk may be partial.
    let per_batch = cfg.sample_count.div_ceil(BATCHES as u64);
    let chunks_per_batch = per_batch.div_ceil(bs);
    let last_rows = (per_batch - (chunks_per_batch - 1) * bs) as usize;
    let sampler = Sampler::new(model);
    let layout = Layout::new(model);
    let mut stats = vec![Vec::with_capacity(BATCHES); targets.len()];
    for b in 0..BATCHES as u64 {
        let (flat, _) = sampler.chunks(cfg, b * chunks_per_batch, chunks_per_batch, last_rows)?;
        for (t, acc) in targets.iter().zip(stats.iter_mut()) {
            acc.push(batch_statistic(t, &layout, &flat)?);
        }
    }
    let samples = BATCHES as u64 * per_batch;
    Ok(targets
        .iter()
        .zip(stats)
        .map(|(t, v)| {
            let k = v.len() as f64;
            let mean = v.iter().sum::<f64>() / k;
            let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1.0);
            OracleReport {
                target: t.clone(),
                estimate: mean,
                std_error: (var / k).sqrt(),
                samples,
                seed: cfg.seed,
            }
        })
        .collect())
}

pub fn estimate(model: &SarmanovModel, cfg: &OracleConfig, target: Target) -> Result<OracleReport> {
    Ok(estimate_many(model, cfg, &[target])?.remove(0))
}
