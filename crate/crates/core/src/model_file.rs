//! JSON model files.
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "portfolios": [[{"beta": 0.12, "weights": [0.4, 0.6]}], [{"beta": 0.15, "weights": [1.0]}]],
//!   "alpha_within": {"1": {"1,2": 16}},
//!   "alpha_cross": {"1,2": [[8, 5, 2], [8, 5, 2]]},
//!   "deductibles": [50, 45],
//!   "settings": {"series_epsilon": 1e-12, "k_max": 20000, "bisection_tolerance": 1e-10}
//! }
//! ```
//!
//! Portfolio and risk labels are 1-based. `alpha_within` maps a portfolio to
//! `"s,t"` position pairs; `alpha_cross` maps `"a,b"` with `a < b` to a
//! `k_a x k_b` matrix whose entry `[s][t]` couples risk `s` of `a` with risk
//! `t` of `b`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mixed_erlang::MixedErlang;
use crate::numerics::Numerics;
use crate::sarmanov::{PairCoefficient, RiskId, SarmanovModel};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub schema_version: u32,
    pub portfolios: Vec<Vec<MixedErlang>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub alpha_within: BTreeMap<String, BTreeMap<String, f64>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub alpha_cross: BTreeMap<String, Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deductibles: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub settings: Option<Numerics>,
}

fn parse_label(s: &str, what: &str) -> Result<usize> {
    match s.trim().parse::<usize>() {
        Ok(v) if v >= 1 => Ok(v - 1),
        _ => Err(Error::Model(format!("{what} label {s:?} is not a positive integer"))),
    }
}

fn parse_pair(s: &str, what: &str) -> Result<(usize, usize)> {
    let mut parts = s.split(',');
    match (parts.next(), parts.next(), parts.next()) {
        (Some(a), Some(b), None) => Ok((parse_label(a, what)?, parse_label(b, what)?)),
        _ => Err(Error::Model(format!("{what} key {s:?} must look like \"i,j\""))),
    }
}

impl ModelFile {
    pub fn from_json(text: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn numerics(&self) -> Numerics {
        self.settings.unwrap_or_default()
    }

    pub fn pairs(&self) -> Result<Vec<PairCoefficient>> {
        let mut out = Vec::new();
        for (a, entries) in &self.alpha_within {
            let a = parse_label(a, "portfolio")?;
            for (key, alpha) in entries {
                let (s, t) = parse_pair(key, "position pair")?;
                out.push(PairCoefficient {
                    first: RiskId::new(a, s),
                    second: RiskId::new(a, t),
                    alpha: *alpha,
                });
            }
        }
        for (key, matrix) in &self.alpha_cross {
            let (a, b) = parse_pair(key, "portfolio pair")?;
            if a >= b {
                return Err(Error::Model(format!("cross key {key:?} must list the smaller portfolio first")));
            }
            let (ka, kb) = match (self.portfolios.get(a), self.portfolios.get(b)) {
                (Some(pa), Some(pb)) => (pa.len(), pb.len()),
                _ => return Err(Error::Model(format!("cross key {key:?} refers to a missing portfolio"))),
            };
            if matrix.len() != ka || matrix.iter().any(|row| row.len() != kb) {
                return Err(Error::Model(format!("cross matrix {key:?} must be {ka} x {kb}")));
            }
            for (s, row) in matrix.iter().enumerate() {
                for (t, alpha) in row.iter().enumerate() {
                    out.push(PairCoefficient {
                        first: RiskId::new(a, s),
                        second: RiskId::new(b, t),
                        alpha: *alpha,
                    });
                }
            }
        }
        Ok(out)
    }

    fn check_version(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Model(format!(
                "unsupported schema version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if let Some(d) = &self.deductibles {
            if d.len() != self.portfolios.len() {
                return Err(Error::Model(format!(
                    "{} deductibles given for {} portfolios",
                    d.len(),
                    self.portfolios.len()
                )));
            }
            if d.iter().any(|x| !(*x > 0.0) || !x.is_finite()) {
                return Err(Error::Model("deductibles must be positive".into()));
            }
        }
        Ok(())
    }

    /// Structural checks only.
    pub fn to_unvalidated_model(&self) -> Result<SarmanovModel> {
        self.check_version()?;
        SarmanovModel::unvalidated(self.portfolios.clone(), self.pairs()?, self.numerics())
    }

    /// Structural and feasibility checks.
    pub fn to_model(&self) -> Result<SarmanovModel> {
        self.check_version()?;
        SarmanovModel::new(self.portfolios.clone(), self.pairs()?, self.numerics())
    }

    pub fn from_model(model: &SarmanovModel, deductibles: Option<Vec<f64>>) -> Self {
        let mut alpha_within: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
        let mut alpha_cross: BTreeMap<String, Vec<Vec<f64>>> = BTreeMap::new();
        let sizes: Vec<usize> = model.portfolios().iter().map(Vec::len).collect();
        for pc in model.pairs() {
            let (a, b) = (pc.first.portfolio, pc.second.portfolio);
            if a == b {
                alpha_within
                    .entry((a + 1).to_string())
                    .or_default()
                    .insert(format!("{},{}", pc.first.position + 1, pc.second.position + 1), pc.alpha);
            } else {
                let m = alpha_cross
                    .entry(format!("{},{}", a + 1, b + 1))
                    .or_insert_with(|| vec![vec![0.0; sizes[b]]; sizes[a]]);
                m[pc.first.position][pc.second.position] = pc.alpha;
            }
        }
        let settings = (*model.numerics() != Numerics::default()).then(|| *model.numerics());
        Self {
            schema_version: SCHEMA_VERSION,
            portfolios: model.portfolios().to_vec(),
            alpha_within,
            alpha_cross,
            deductibles,
            settings,
        }
    }
}
