//! The mixed Erlang law `ME(beta, Q)`: a finite mixture of Erlang
//! distributions sharing the rate `beta`, where `Q[k - 1]` is the weight on
//! shape `k`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::erlang::{mixture_cdf, mixture_pdf, mixture_sf};
use crate::error::{check_level, check_nonneg, Error, Result};
use crate::numerics::{bisect_increasing, golden_max, Numerics, NORMALIZATION_TOLERANCE};

/// Grid resolution for the density-maximum scan.
const PDF_MAX_GRID: usize = 2048;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MixedErlangRepr", into = "MixedErlangRepr")]
pub struct MixedErlang {
    beta: f64,
    weights: Vec<f64>,
    defective: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MixedErlangRepr {
    beta: f64,
    weights: Vec<f64>,
}

impl TryFrom<MixedErlangRepr> for MixedErlang {
    type Error = Error;

    fn try_from(r: MixedErlangRepr) -> Result<Self> {
        MixedErlang::new(r.beta, r.weights)
    }
}

impl From<MixedErlang> for MixedErlangRepr {
    fn from(d: MixedErlang) -> Self {
        Self {
            beta: d.beta,
            weights: d.weights,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Moments {
    pub mean: f64,
    pub variance: f64,
    pub skewness: f64,
    /// Non-excess kurtosis, `E[(X - mu)^4] / sigma^4`.
    pub kurtosis: f64,
}

fn validate_parts(beta: f64, weights: &[f64]) -> Result<()> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::Domain {
            name: "beta",
            value: beta,
            reason: "scale must be positive and finite",
        });
    }
    if weights.is_empty() {
        return Err(Error::InvalidWeights("weight vector is empty".into()));
    }
    if let Some((i, w)) = weights.iter().enumerate().find(|(_, w)| !(**w >= 0.0 && w.is_finite())) {
        return Err(Error::InvalidWeights(format!("weight q_{} = {w} is not a nonnegative number", i + 1)));
    }
    Ok(())
}

fn trim_trailing_zeros(weights: &mut Vec<f64>) {
    while weights.len() > 1 && weights.last() == Some(&0.0) {
        weights.pop();
    }
}

/// Drops the longest suffix with `sum k |w_k| <= eps`, then caps at `k_max`.
/// Weighting by shape bounds the lost partial expectation as well as the mass.
pub(crate) fn truncate_tail(mut weights: Vec<f64>, eps: f64, k_max: usize) -> Vec<f64> {
    let mut tail = 0.0;
    let mut keep = weights.len();
    while keep > 1 {
        let next = tail + keep as f64 * weights[keep - 1].abs();
        if next > eps {
            break;
        }
        tail = next;
        keep -= 1;
    }
    weights.truncate(keep.min(k_max).max(1));
    weights
}

impl MixedErlang {
    /// A proper law. Weights within `1e-9` of unit mass are renormalized.
    pub fn new(beta: f64, mut weights: Vec<f64>) -> Result<Self> {
        validate_parts(beta, &weights)?;
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(Error::InvalidWeights(format!("weights sum to {total}, expected 1")));
        }
        if total != 1.0 {
            weights.iter_mut().for_each(|w| *w /= total);
        }
        trim_trailing_zeros(&mut weights);
        Ok(Self {
            beta,
            weights,
            defective: false,
        })
    }

    /// A law whose total mass may fall short of one.
    pub fn new_defective(beta: f64, mut weights: Vec<f64>) -> Result<Self> {
        validate_parts(beta, &weights)?;
        let total: f64 = weights.iter().sum();
        if total > 1.0 + NORMALIZATION_TOLERANCE {
            return Err(Error::InvalidWeights(format!("defective weights sum to {total} > 1")));
        }
        trim_trailing_zeros(&mut weights);
        Ok(Self {
            beta,
            weights,
            defective: true,
        })
    }

    /// Truncates a (conceptually infinite) proper weight vector and builds the law.
    pub(crate) fn from_series(beta: f64, weights: Vec<f64>, num: &Numerics) -> Result<Self> {
        Self::new(beta, truncate_tail(weights, num.series_epsilon, num.k_max))
    }

    pub fn exponential(beta: f64) -> Result<Self> {
        Self::new(beta, vec![1.0])
    }

    pub fn scale(&self) -> f64 {
        self.beta
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn is_defective(&self) -> bool {
        self.defective
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn pdf(&self, x: f64) -> Result<f64> {
        check_nonneg("x", x)?;
        Ok(mixture_pdf(&self.weights, self.beta, x).max(0.0))
    }

    pub fn cdf(&self, x: f64) -> Result<f64> {
        check_nonneg("x", x)?;
        Ok(mixture_cdf(&self.weights, self.beta, x).clamp(0.0, 1.0))
    }

    pub fn sf(&self, x: f64) -> Result<f64> {
        check_nonneg("x", x)?;
        Ok(mixture_sf(&self.weights, self.beta, x).clamp(0.0, 1.0))
    }

    /// `E[X^m] = beta^{-m} sum_k q_k k (k + 1) ... (k + m - 1)`.
    pub fn raw_moment(&self, m: u32) -> f64 {
        let s: f64 = self
            .weights
            .iter()
            .enumerate()
            .map(|(i, q)| {
                let k = (i + 1) as f64;
                q * (0..m).map(|r| k + r as f64).product::<f64>()
            })
            .sum();
        s / self.beta.powi(m as i32)
    }

    pub fn mean(&self) -> f64 {
        self.raw_moment(1)
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.raw_moment(2) - m * m
    }

    pub fn moments(&self) -> Moments {
        let m1 = self.raw_moment(1);
        let m2 = self.raw_moment(2);
        let m3 = self.raw_moment(3);
        let m4 = self.raw_moment(4);
        let var = m2 - m1 * m1;
        let c3 = m3 - 3.0 * m1 * m2 + 2.0 * m1.powi(3);
        let c4 = m4 - 4.0 * m1 * m3 + 6.0 * m1 * m1 * m2 - 3.0 * m1.powi(4);
        Moments {
            mean: m1,
            variance: var,
            skewness: c3 / var.powf(1.5),
            kurtosis: c4 / (var * var),
        }
    }

    pub fn quantile(&self, p: f64) -> Result<f64> {
        self.quantile_with(p, &Numerics::default())
    }

    /// Smallest `x` with `F(x) >= p`, by bracketed bisection.
    pub fn quantile_with(&self, p: f64, num: &Numerics) -> Result<f64> {
        check_level(p)?;
        let mass = self.total_mass();
        if p >= mass {
            return Err(Error::Bracket { p, mass });
        }
        let cdf = |x: f64| mixture_cdf(&self.weights, self.beta, x);
        let mean = self.mean() / mass;
        let sd = (self.raw_moment(2) / mass - mean * mean).max(0.0).sqrt();
        let mut hi = mean + 40.0 * sd;
        let mut doublings = 0;
        while cdf(hi) < p {
            hi *= 2.0;
            doublings += 1;
            if doublings > 200 || !hi.is_finite() {
                return Err(Error::Bracket { p, mass });
            }
        }
        Ok(bisect_increasing(cdf, p, 0.0, hi, num.bisection_tolerance))
    }

    /// `E[X 1{X > x}] = sum_k q_k (k / beta) Wbar_{k+1}(x)`.
    pub fn partial_expectation(&self, x: f64) -> Result<f64> {
        check_nonneg("x", x)?;
        let coeffs = self.size_biased_coefficients();
        Ok(mixture_sf(&coeffs, self.beta, x).max(0.0) / self.beta)
    }

    /// Coefficients `k q_k` placed at shape `k + 1`.
    pub(crate) fn size_biased_coefficients(&self) -> Vec<f64> {
        std::iter::once(0.0)
            .chain(self.weights.iter().enumerate().map(|(i, q)| (i + 1) as f64 * q))
            .collect()
    }

    pub fn tvar(&self, p: f64) -> Result<f64> {
        let x = self.quantile(p)?;
        Ok(self.partial_expectation(x)? / (1.0 - p))
    }

    /// Global maximum of the density on `[0, inf)`.
    pub fn pdf_max(&self) -> f64 {
        self.pdf_argmax().1
    }

    /// Location and value of the density maximum: a grid scan on
    /// `[0, q_0.99999]` refined by golden-section search, compared with `f(0)`.
    pub fn pdf_argmax(&self) -> (f64, f64) {
        let f = |x: f64| mixture_pdf(&self.weights, self.beta, x);
        let at_zero = self.beta * self.weights[0];
        let upper = self
            .quantile(0.99999 * self.total_mass().min(1.0))
            .unwrap_or_else(|_| self.mean() * 50.0);
        let h = upper / (PDF_MAX_GRID - 1) as f64;
        let mut best = (0, at_zero);
        for i in 1..PDF_MAX_GRID {
            let v = f(i as f64 * h);
            if v > best.1 {
                best = (i, v);
            }
        }
        if best.0 == 0 {
            return (0.0, at_zero);
        }
        let lo = (best.0 - 1) as f64 * h;
        let hi = (best.0 + 1) as f64 * h;
        let (x, v) = golden_max(f, lo, hi, 1e-14);
        if v >= at_zero {
            (x, v)
        } else {
            (0.0, at_zero)
        }
    }

    /// Draws the shape from the weights, then sums that many exponentials.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let total = self.total_mass();
        let mut u = rng.random::<f64>() * total;
        let mut shape = self.weights.len();
        for (i, w) in self.weights.iter().enumerate() {
            if u < *w {
                shape = i + 1;
                break;
            }
            u -= w;
        }
        let mut s = 0.0;
        for _ in 0..shape {
            s -= (1.0 - rng.random::<f64>()).ln();
        }
        s / self.beta
    }
}
