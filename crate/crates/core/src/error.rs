use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("argument {name} = {value} is outside the domain ({reason})")]
    Domain {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("invalid mixing weights: {0}")]
    InvalidWeights(String),

    #[error("cannot rescale from {from} down to {to}; the target scale must not be smaller")]
    RescaleDownward { from: f64, to: f64 },

    #[error("scale mismatch: expected {expected}, found {found}")]
    ScaleMismatch { expected: f64, found: f64 },

    #[error("quantile bracket failed: level {p} is not reachable (total mass {mass})")]
    Bracket { p: f64, mass: f64 },

    #[error("aggregate weight {index} is {value:e}; the dependence model is inconsistent")]
    NegativeWeight { index: usize, value: f64 },

    #[error("invalid model: {0}")]
    Model(String),

    #[error("alpha {alpha} outside the admissible range [{lower}, {upper}]")]
    AlphaOutOfBounds { alpha: f64, lower: f64, upper: f64 },

    #[error("rejection envelope violated: bracket {bracket} exceeds constant {envelope}")]
    Envelope { bracket: f64, envelope: f64 },

    #[error("{portfolios} portfolios exceed the subset-enumeration cap of {cap}")]
    TooManyPortfolios { portfolios: usize, cap: usize },
}

pub(crate) fn check_nonneg(name: &'static str, value: f64) -> Result<()> {
    if value >= 0.0 && !value.is_nan() {
        Ok(())
    } else {
        Err(Error::Domain {
            name,
            value,
            reason: "must be a nonnegative number",
        })
    }
}

pub(crate) fn check_level(p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain {
            name: "p",
            value: p,
            reason: "tolerance level must lie in (0, 1)",
        })
    }
}
