//! The multivariate Sarmanov model with density kernels
//! `phi(x) = f(x) - gamma`, `gamma = E[f(X)]`, and pairwise interaction terms
//! within and across portfolios.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{check_nonneg, Error, Result};
use crate::mixed_erlang::MixedErlang;
use crate::numerics::Numerics;
use crate::transforms::expected_density;

/// Largest risk count for which every corner is enumerated.
pub const EXHAUSTIVE_CORNER_LIMIT: usize = 20;
const SAMPLED_CORNERS: usize = 1_000_000;
const BRACKET_SLACK: f64 = 1e-12;

/// Location of a risk: portfolio index and position inside it (both 0-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct RiskId {
    pub portfolio: usize,
    pub position: usize,
}

impl RiskId {
    pub fn new(portfolio: usize, position: usize) -> Self {
        Self { portfolio, position }
    }
}

/// One nonzero interaction coefficient `alpha` between risks `first < second`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairCoefficient {
    pub first: RiskId,
    pub second: RiskId,
    pub alpha: f64,
}

/// Cached per-risk quantities.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RiskSummary {
    pub id: RiskId,
    /// `E[f(X)]`.
    pub gamma: f64,
    /// `max_x f(x)`.
    pub pdf_max: f64,
}

impl RiskSummary {
    /// Range of the kernel, `[-gamma, M - gamma]`.
    pub fn kernel_range(&self) -> (f64, f64) {
        (-self.gamma, self.pdf_max - self.gamma)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AlphaBounds {
    pub lower: f64,
    pub upper: f64,
}

impl AlphaBounds {
    pub fn contains(&self, alpha: f64) -> bool {
        alpha >= self.lower && alpha <= self.upper
    }
}

/// Admissible `alpha` interval for two kernels with ranges `[-g_i, m_i - g_i]`.
pub fn alpha_bounds_from_ranges(g1: f64, m1: f64, g2: f64, m2: f64) -> AlphaBounds {
    let lower = -1.0 / f64::max(g1 * g2, (m1 - g1) * (m2 - g2));
    let upper = 1.0 / f64::max(g1 * (m2 - g2), (m1 - g1) * g2);
    AlphaBounds { lower, upper }
}

pub fn alpha_bounds_bivariate(d1: &MixedErlang, d2: &MixedErlang) -> AlphaBounds {
    alpha_bounds_from_ranges(expected_density(d1), d1.pdf_max(), expected_density(d2), d2.pdf_max())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Feasibility {
    Feasible {
        min_bracket: f64,
    },
    /// `corner` holds the kernel value of every risk at the violating corner.
    Infeasible {
        corner: Vec<f64>,
        bracket: f64,
    },
    /// Corners were sampled rather than enumerated and none violated.
    Undetermined {
        min_bracket: f64,
    },
}

impl Feasibility {
    pub fn is_infeasible(&self) -> bool {
        matches!(self, Feasibility::Infeasible { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SarmanovModel {
    portfolios: Vec<Vec<MixedErlang>>,
    offsets: Vec<usize>,
    risks: Vec<RiskSummary>,
    pairs: Vec<PairCoefficient>,
    numerics: Numerics,
}

impl SarmanovModel {
    /// Builds and validates a model; infeasible coefficients are rejected.
    pub fn new(portfolios: Vec<Vec<MixedErlang>>, pairs: Vec<PairCoefficient>, numerics: Numerics) -> Result<Self> {
        let model = Self::unvalidated(portfolios, pairs, numerics)?;
        if let Feasibility::Infeasible { bracket, .. } = model.feasibility_check() {
            return Err(Error::Model(format!(
                "dependence coefficients are infeasible: the density bracket reaches {bracket:.6}"
            )));
        }
        Ok(model)
    }

    /// Checks structure only; feasibility is left to [`Self::feasibility_check`].
    pub fn unvalidated(
        portfolios: Vec<Vec<MixedErlang>>,
        pairs: Vec<PairCoefficient>,
        numerics: Numerics,
    ) -> Result<Self> {
        if portfolios.is_empty() || portfolios.iter().any(|p| p.is_empty()) {
            return Err(Error::Model("every portfolio needs at least one risk".into()));
        }
        if let Some(d) = portfolios.iter().flatten().find(|d| d.is_defective()) {
            return Err(Error::Model(format!("marginal with mass {} is not a proper law", d.total_mass())));
        }
        let mut offsets = Vec::with_capacity(portfolios.len());
        let mut risks = Vec::new();
        for (a, p) in portfolios.iter().enumerate() {
            offsets.push(risks.len());
            for (s, d) in p.iter().enumerate() {
                risks.push(RiskSummary {
                    id: RiskId::new(a, s),
                    gamma: expected_density(d),
                    pdf_max: d.pdf_max(),
                });
            }
        }
        let mut normalized: Vec<PairCoefficient> = Vec::with_capacity(pairs.len());
        for pc in pairs {
            let (first, second) = if pc.first <= pc.second {
                (pc.first, pc.second)
            } else {
                (pc.second, pc.first)
            };
            for id in [first, second] {
                if id.portfolio >= portfolios.len() || id.position >= portfolios[id.portfolio].len() {
                    return Err(Error::Model(format!(
                        "coefficient refers to missing risk {} of portfolio {}",
                        id.position + 1,
                        id.portfolio + 1
                    )));
                }
            }
            if first == second {
                return Err(Error::Model("a risk cannot be paired with itself".into()));
            }
            if !pc.alpha.is_finite() {
                return Err(Error::Model("alpha must be finite".into()));
            }
            if normalized.iter().any(|q| q.first == first && q.second == second) {
                return Err(Error::Model(format!(
                    "duplicate coefficient for risks ({}, {}) and ({}, {})",
                    first.portfolio + 1,
                    first.position + 1,
                    second.portfolio + 1,
                    second.position + 1
                )));
            }
            if pc.alpha != 0.0 {
                normalized.push(PairCoefficient {
                    first,
                    second,
                    alpha: pc.alpha,
                });
            }
        }
        // Sum order: portfolio pair, then positions.
        normalized.sort_by_key(|p| (p.first.portfolio, p.second.portfolio, p.first.position, p.second.position));
        Ok(Self {
            portfolios,
            offsets,
            risks,
            pairs: normalized,
            numerics,
        })
    }

    /// The same risks and coefficients with all portfolios pooled into one,
    /// so that the single portfolio sum is the total over all portfolios.
    pub fn merged(&self) -> Result<SarmanovModel> {
        if self.portfolios.len() == 1 {
            return Ok(self.clone());
        }
        let flat = |id: RiskId| RiskId::new(0, self.flat_index(id));
        let pairs = self
            .pairs
            .iter()
            .map(|p| PairCoefficient {
                first: flat(p.first),
                second: flat(p.second),
                alpha: p.alpha,
            })
            .collect();
        Self::unvalidated(vec![self.marginals().cloned().collect()], pairs, self.numerics)
    }

    /// Two dependent risks in a single portfolio.
    pub fn bivariate(d1: MixedErlang, d2: MixedErlang, alpha: f64) -> Result<Self> {
        Self::new(
            vec![vec![d1, d2]],
            vec![PairCoefficient {
                first: RiskId::new(0, 0),
                second: RiskId::new(0, 1),
                alpha,
            }],
            Numerics::default(),
        )
    }

    pub fn portfolios(&self) -> &[Vec<MixedErlang>] {
        &self.portfolios
    }

    pub fn portfolio_count(&self) -> usize {
        self.portfolios.len()
    }

    /// Total number of risks.
    pub fn risk_count(&self) -> usize {
        self.risks.len()
    }

    pub fn risks(&self) -> &[RiskSummary] {
        &self.risks
    }

    pub fn pairs(&self) -> &[PairCoefficient] {
        &self.pairs
    }

    pub fn numerics(&self) -> &Numerics {
        &self.numerics
    }

    pub fn flat_index(&self, id: RiskId) -> usize {
        self.offsets[id.portfolio] + id.position
    }

    pub fn marginal(&self, id: RiskId) -> &MixedErlang {
        &self.portfolios[id.portfolio][id.position]
    }

    pub fn marginals(&self) -> impl Iterator<Item = &MixedErlang> {
        self.portfolios.iter().flatten()
    }

    pub fn gamma(&self, id: RiskId) -> f64 {
        self.risks[self.flat_index(id)].gamma
    }

    pub fn max_scale(&self) -> f64 {
        self.marginals().map(MixedErlang::scale).fold(0.0, f64::max)
    }

    /// `xi = 1 + sum alpha gamma gamma'`.
    pub fn xi(&self) -> f64 {
        1.0 + self.pairs.iter().map(|p| p.alpha * self.gamma(p.first) * self.gamma(p.second)).sum::<f64>()
    }

    /// `1 + sum alpha phi phi'` given kernel values in flat order.
    pub fn bracket_from_kernels(&self, phi: &[f64]) -> f64 {
        1.0 + self
            .pairs
            .iter()
            .map(|p| p.alpha * phi[self.flat_index(p.first)] * phi[self.flat_index(p.second)])
            .sum::<f64>()
    }

    /// Envelope constant `1 + sum |alpha| max(g, M - g) max(g', M' - g')`
    /// bounding the bracket from above.
    pub fn envelope_constant(&self) -> f64 {
        let amp = |id: RiskId| {
            let r = &self.risks[self.flat_index(id)];
            r.gamma.max(r.pdf_max - r.gamma)
        };
        1.0 + self.pairs.iter().map(|p| p.alpha.abs() * amp(p.first) * amp(p.second)).sum::<f64>()
    }

    /// Joint density at `x` (flat order: portfolio by portfolio).
    pub fn joint_pdf(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.risk_count() {
            return Err(Error::Model(format!("expected {} coordinates, got {}", self.risk_count(), x.len())));
        }
        let mut product = 1.0;
        let mut phi = Vec::with_capacity(x.len());
        for ((d, r), xi) in self.marginals().zip(&self.risks).zip(x) {
            check_nonneg("x", *xi)?;
            let f = d.pdf(*xi)?;
            product *= f;
            phi.push(f - r.gamma);
        }
        if self.pairs.is_empty() {
            return Ok(product);
        }
        Ok(product * self.bracket_from_kernels(&phi))
    }

    /// Minimizes the bracket over the corners of the kernel box.
    pub fn feasibility_check(&self) -> Feasibility {
        let z = self.risk_count();
        let corner_value = |mask: u64| -> Vec<f64> {
            self.risks
                .iter()
                .enumerate()
                .map(|(i, r)| {
                    let (lo, hi) = r.kernel_range();
                    if mask >> i & 1 == 1 {
                        hi
                    } else {
                        lo
                    }
                })
                .collect()
        };
        if self.pairs.is_empty() {
            return Feasibility::Feasible { min_bracket: 1.0 };
        }
        let exhaustive = z <= EXHAUSTIVE_CORNER_LIMIT;
        let mut best = (f64::INFINITY, 0u64);
        let mut visit = |mask: u64| {
            let b = self.bracket_from_kernels(&corner_value(mask));
            if b < best.0 {
                best = (b, mask);
            }
        };
        if exhaustive {
            (0..1u64 << z).for_each(&mut visit);
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(0x5a4d_a40f);
            for _ in 0..SAMPLED_CORNERS {
                // Each bit picks one end of a risk's kernel range.
                let mask = if z >= 64 { rng.random::<u64>() } else { rng.random::<u64>() & ((1u64 << z) - 1) };
                visit(mask);
            }
        }
        let (min_bracket, mask) = best;
        if min_bracket < -BRACKET_SLACK {
            Feasibility::Infeasible {
                corner: corner_value(mask),
                bracket: min_bracket,
            }
        } else if exhaustive {
            Feasibility::Feasible { min_bracket }
        } else {
            Feasibility::Undetermined { min_bracket }
        }
    }
}
