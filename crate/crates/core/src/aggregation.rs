//! Laws of portfolio sums under Sarmanov dependence.
//!
//! Expanding the density bracket turns the joint law of the portfolio sums
//! into a signed combination of independent mixed Erlang laws, all expressed
//! at the common rate `2 * beta_max`:
//!
//! ```text
//! F_S(s) = xi * prod_j F_{S_j^(1)}(s_j)
//!        - sum_pairs c * ( prod_j F_{S_j^(2;first)} + prod_j F_{S_j^(2;second)} - prod_j F_{S_j^(3;pair)} )
//! ```
//!
//! with `c = alpha * gamma * gamma'`. `S^(1)` convolves the marginals,
//! `S^(2;r)` replaces risk `r` by its squared-density law, and `S^(3)`
//! replaces both risks of a pair.

use serde::Serialize;

use crate::erlang::mixture_sf;
use crate::error::{check_level, check_nonneg, Error, Result};
use crate::mixed_erlang::MixedErlang;
use crate::numerics::NORMALIZATION_TOLERANCE;
use crate::sarmanov::{PairCoefficient, RiskId, SarmanovModel};
use crate::transforms::{apply_all, convolve_with, mu_tilde, Transform};

/// Negative aggregate weights below this signal an inconsistent model.
pub const NEGATIVE_WEIGHT_THRESHOLD: f64 = -1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct PairComponent {
    pub pair: PairCoefficient,
    /// `alpha * gamma_first * gamma_second`.
    pub coefficient: f64,
    /// Index into [`AggregateRepresentation::singles`] for each risk of the pair.
    pub first: usize,
    pub second: usize,
    /// Per-portfolio laws with both risks of the pair squared.
    pub joint: Vec<MixedErlang>,
}

/// A term `weight * prod_j F_{laws[j]}` of the signed combination.
#[derive(Debug, Clone, PartialEq)]
pub struct SignedTerm {
    pub weight: f64,
    pub laws: Vec<MixedErlang>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRepresentation {
    pub xi: f64,
    pub common_scale: f64,
    /// `S_j^(1)` for every portfolio.
    pub base: Vec<MixedErlang>,
    /// Risk `r` with its squared-density law, one law per portfolio.
    pub singles: Vec<(RiskId, Vec<MixedErlang>)>,
    pub pairs: Vec<PairComponent>,
}

/// Convolves each portfolio after applying `chain(risk)` and rescaling.
fn portfolio_laws<F>(model: &SarmanovModel, common: f64, chain: F) -> Result<Vec<MixedErlang>>
where
    F: Fn(RiskId) -> Vec<Transform>,
{
    let num = model.numerics();
    model
        .portfolios()
        .iter()
        .enumerate()
        .map(|(a, risks)| {
            let parts = risks
                .iter()
                .enumerate()
                .map(|(s, d)| {
                    let mut c = chain(RiskId::new(a, s));
                    c.push(Transform::Rescale { to: common });
                    apply_all(d, &c, num)
                })
                .collect::<Result<Vec<_>>>()?;
            convolve_with(&parts, num)
        })
        .collect()
}

fn squared_at(targets: &[RiskId]) -> impl Fn(RiskId) -> Vec<Transform> + '_ {
    move |id| {
        if targets.contains(&id) {
            vec![Transform::SquaredDensity]
        } else {
            vec![]
        }
    }
}

impl AggregateRepresentation {
    pub fn build(model: &SarmanovModel) -> Result<Self> {
        let common = 2.0 * model.max_scale();
        let base = portfolio_laws(model, common, |_| vec![])?;

        let mut singles: Vec<(RiskId, Vec<MixedErlang>)> = Vec::new();
        let single_index = |id: RiskId, singles: &mut Vec<(RiskId, Vec<MixedErlang>)>| -> Result<usize> {
            if let Some(i) = singles.iter().position(|(r, _)| *r == id) {
                return Ok(i);
            }
            singles.push((id, portfolio_laws(model, common, squared_at(&[id]))?));
            Ok(singles.len() - 1)
        };

        let mut pairs = Vec::with_capacity(model.pairs().len());
        for pc in model.pairs() {
            let first = single_index(pc.first, &mut singles)?;
            let second = single_index(pc.second, &mut singles)?;
            let joint = portfolio_laws(model, common, squared_at(&[pc.first, pc.second]))?;
            pairs.push(PairComponent {
                pair: *pc,
                coefficient: pc.alpha * model.gamma(pc.first) * model.gamma(pc.second),
                first,
                second,
                joint,
            });
        }
        Ok(Self {
            xi: model.xi(),
            common_scale: common,
            base,
            singles,
            pairs,
        })
    }

    pub fn portfolio_count(&self) -> usize {
        self.base.len()
    }

    /// Number of distinct component law vectors.
    pub fn component_count(&self) -> usize {
        1 + self.singles.len() + self.pairs.len()
    }

    /// The combination with the weights of shared single-risk laws merged.
    pub fn signed_terms(&self) -> Vec<SignedTerm> {
        let mut single_weights = vec![0.0; self.singles.len()];
        for p in &self.pairs {
            single_weights[p.first] -= p.coefficient;
            single_weights[p.second] -= p.coefficient;
        }
        let mut out = vec![SignedTerm {
            weight: self.xi,
            laws: self.base.clone(),
        }];
        out.extend(self.singles.iter().zip(single_weights).map(|((_, laws), w)| SignedTerm {
            weight: w,
            laws: laws.clone(),
        }));
        out.extend(self.pairs.iter().map(|p| SignedTerm {
            weight: p.coefficient,
            laws: p.joint.clone(),
        }));
        out
    }

    fn combine<F>(&self, s: &[f64], eval: F) -> Result<f64>
    where
        F: Fn(&MixedErlang, f64) -> Result<f64>,
    {
        if s.len() != self.portfolio_count() {
            return Err(Error::Model(format!(
                "expected {} coordinates, got {}",
                self.portfolio_count(),
                s.len()
            )));
        }
        for x in s {
            check_nonneg("s", *x)?;
        }
        let prod = |laws: &[MixedErlang]| -> Result<f64> {
            laws.iter().zip(s).try_fold(1.0, |acc, (d, x)| Ok(acc * eval(d, *x)?))
        };
        let mut total = self.xi * prod(&self.base)?;
        let single_vals = self
            .singles
            .iter()
            .map(|(_, laws)| prod(laws))
            .collect::<Result<Vec<_>>>()?;
        for p in &self.pairs {
            total -= p.coefficient * (single_vals[p.first] + single_vals[p.second] - prod(&p.joint)?);
        }
        Ok(total)
    }

    /// Joint distribution function of the portfolio sums.
    pub fn joint_df(&self, s: &[f64]) -> Result<f64> {
        self.combine(s, MixedErlang::cdf)
    }

    /// Joint density of the portfolio sums.
    pub fn joint_pdf(&self, s: &[f64]) -> Result<f64> {
        self.combine(s, MixedErlang::pdf)
    }
}

/// Collapses a single-portfolio model into one mixed Erlang law at `2 * beta_max`.
pub fn aggregate_single(model: &SarmanovModel) -> Result<MixedErlang> {
    if model.portfolio_count() != 1 {
        return Err(Error::Model(format!(
            "single-portfolio aggregation needs one portfolio, got {}",
            model.portfolio_count()
        )));
    }
    let rep = AggregateRepresentation::build(model)?;
    let mut p: Vec<f64> = Vec::new();
    for term in rep.signed_terms() {
        let w = term.laws[0].weights();
        if p.len() < w.len() {
            p.resize(w.len(), 0.0);
        }
        for (acc, q) in p.iter_mut().zip(w) {
            *acc += term.weight * q;
        }
    }
    collapse_signed(rep.common_scale, p)
}

fn collapse_signed(scale: f64, mut p: Vec<f64>) -> Result<MixedErlang> {
    for (i, v) in p.iter_mut().enumerate() {
        if *v < NEGATIVE_WEIGHT_THRESHOLD {
            return Err(Error::NegativeWeight { index: i + 1, value: *v });
        }
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > NORMALIZATION_TOLERANCE {
        return Err(Error::InvalidWeights(format!("aggregate weights sum to {total}")));
    }
    MixedErlang::new(scale, p)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Contribution {
    /// 1-based label of the risk or portfolio.
    pub unit: usize,
    pub capital: f64,
    pub share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AllocationReport {
    pub p: f64,
    pub var: f64,
    pub tvar: f64,
    pub contributions: Vec<Contribution>,
    /// `sum_j C_j - TVaR`.
    pub additivity_residual: f64,
    /// Set when the level falls inside an atom at zero and `var` is 0.
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub at_atom: bool,
}

impl AllocationReport {
    pub(crate) fn from_parts(p: f64, var: f64, tvar: f64, capitals: Vec<f64>, at_atom: bool) -> Self {
        let total: f64 = capitals.iter().sum();
        let contributions = capitals
            .into_iter()
            .enumerate()
            .map(|(i, c)| Contribution {
                unit: i + 1,
                capital: c,
                share: if total != 0.0 { c / total } else { 0.0 },
            })
            .collect();
        Self {
            p,
            var,
            tvar,
            contributions,
            additivity_residual: total - tvar,
            at_atom,
        }
    }

    pub fn capitals(&self) -> Vec<f64> {
        self.contributions.iter().map(|c| c.capital).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// CSV with header `unit,C_j,share`, one row per unit and a `total` row.
    pub fn to_csv(&self, precision: usize) -> String {
        let mut out = String::from("unit,C_j,share\n");
        for c in &self.contributions {
            out.push_str(&format!("{},{:.prec$},{:.prec$}\n", c.unit, c.capital, c.share, prec = precision));
        }
        let total: f64 = self.contributions.iter().map(|c| c.capital).sum();
        out.push_str(&format!("total,{:.prec$},{:.prec$}\n", total, 1.0, prec = precision));
        out
    }
}

/// Allocation weights `z_{., j}` for risk `j` of a single-portfolio model:
/// `sum_i z_{i,j} Wbar_i(s, 2 beta_max) = E[X_j 1{S > s}]`.
pub fn allocation_weights(model: &SarmanovModel, j: usize) -> Result<Vec<f64>> {
    let risks = &model.portfolios()[0];
    if j >= risks.len() {
        return Err(Error::Model(format!("risk {} does not exist", j + 1)));
    }
    let num = *model.numerics();
    let common = 2.0 * model.max_scale();
    let target = RiskId::new(0, j);
    let mean_j = risks[j].mean();
    let mu_tilde_j = mu_tilde(&risks[j])?;

    // Size bias at j, squared density at the risks in `squared`.
    let law = |squared: &[RiskId]| -> Result<Vec<f64>> {
        let chain = |id: RiskId| {
            let mut c = Vec::new();
            if squared.contains(&id) {
                c.push(Transform::SquaredDensity);
            }
            if id == target {
                c.push(Transform::SizeBiased);
            }
            c
        };
        let parts = risks
            .iter()
            .enumerate()
            .map(|(s, d)| {
                let mut c = chain(RiskId::new(0, s));
                c.push(Transform::Rescale { to: common });
                apply_all(d, &c, &num)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(convolve_with(&parts, &num)?.weights().to_vec())
    };
    let multiplier = |squared: &[RiskId]| if squared.contains(&target) { mu_tilde_j } else { mean_j };

    let mut z: Vec<f64> = Vec::new();
    let mut add = |w: f64, v: Vec<f64>| {
        if z.len() < v.len() {
            z.resize(v.len(), 0.0);
        }
        for (acc, x) in z.iter_mut().zip(v) {
            *acc += w * x;
        }
    };
    add(model.xi() * mean_j, law(&[])?);
    for pc in model.pairs() {
        let c = pc.alpha * model.gamma(pc.first) * model.gamma(pc.second);
        let (a, b) = (pc.first, pc.second);
        add(-c * multiplier(&[b]), law(&[b])?);
        add(-c * multiplier(&[a]), law(&[a])?);
        add(c * multiplier(&[a, b]), law(&[a, b])?);
    }
    Ok(z)
}

/// TVaR allocation to every risk of a single-portfolio model.
pub fn tvar_allocate(model: &SarmanovModel, p: f64) -> Result<AllocationReport> {
    check_level(p)?;
    let s = aggregate_single(model)?;
    let common = s.scale();
    let var = s.quantile_with(p, model.numerics())?;
    let tvar = s.partial_expectation(var)? / (1.0 - p);
    let capitals = (0..model.risk_count())
        .map(|j| Ok(mixture_sf(&allocation_weights(model, j)?, common, var) / (1.0 - p)))
        .collect::<Result<Vec<_>>>()?;
    Ok(AllocationReport::from_parts(p, var, tvar, capitals, false))
}
