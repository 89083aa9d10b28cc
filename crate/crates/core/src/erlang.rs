//! Erlang densities and distribution functions, plus evaluation of signed
//! Erlang mixtures sharing one rate.
//!
//! Every evaluation reduces to Poisson probabilities: with `lambda = beta * x`,
//! `w_k(x) = beta * P(N = k - 1)` and the Erlang(k) survival function is
//! `P(N <= k - 1)`.

use crate::error::{check_nonneg, Error, Result};
use crate::numerics::{ln_factorial, poisson_pmf, poisson_upper_tail};

/// Shapes above this are evaluated in log space.
const LOG_SPACE_SHAPE: u32 = 20;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Erlang {
    shape: u32,
    rate: f64,
}

impl Erlang {
    pub fn new(shape: u32, rate: f64) -> Result<Self> {
        if shape == 0 {
            return Err(Error::Domain {
                name: "shape",
                value: 0.0,
                reason: "Erlang shape must be at least 1",
            });
        }
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(Error::Domain {
                name: "rate",
                value: rate,
                reason: "Erlang rate must be positive and finite",
            });
        }
        Ok(Self { shape, rate })
    }

    pub fn shape(&self) -> u32 {
        self.shape
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn pdf(&self, x: f64) -> Result<f64> {
        check_nonneg("x", x)?;
        let k = self.shape;
        let beta = self.rate;
        if x == 0.0 {
            return Ok(if k == 1 { beta } else { 0.0 });
        }
        if k > LOG_SPACE_SHAPE {
            let ln = k as f64 * beta.ln() + (k - 1) as f64 * x.ln() - beta * x - ln_factorial(u64::from(k - 1));
            Ok(ln.exp())
        } else {
            let mut v = beta * (-beta * x).exp();
            for j in 1..k {
                v *= beta * x / j as f64;
            }
            Ok(v)
        }
    }

    pub fn sf(&self, x: f64) -> Result<f64> {
        check_nonneg("x", x)?;
        let lambda = self.rate * x;
        let k = self.shape as usize;
        if lambda < k as f64 {
            Ok((1.0 - poisson_upper_tail(lambda, k)).clamp(0.0, 1.0))
        } else {
            Ok(poisson_pmf(lambda, k).iter().sum::<f64>().clamp(0.0, 1.0))
        }
    }

    pub fn cdf(&self, x: f64) -> Result<f64> {
        check_nonneg("x", x)?;
        Ok(poisson_upper_tail(self.rate * x, self.shape as usize))
    }
}

pub fn erlang_pdf(shape: u32, rate: f64, x: f64) -> Result<f64> {
    Erlang::new(shape, rate)?.pdf(x)
}

pub fn erlang_sf(shape: u32, rate: f64, x: f64) -> Result<f64> {
    Erlang::new(shape, rate)?.sf(x)
}

pub fn erlang_cdf(shape: u32, rate: f64, x: f64) -> Result<f64> {
    Erlang::new(shape, rate)?.cdf(x)
}

// Mixture kernels. `coeffs[i]` multiplies the Erlang law of shape `i + 1`;
// coefficients may be signed. `x` is assumed validated by the caller.

pub(crate) fn mixture_pdf(coeffs: &[f64], rate: f64, x: f64) -> f64 {
    if coeffs.is_empty() {
        return 0.0;
    }
    let p = poisson_pmf(rate * x, coeffs.len());
    rate * coeffs.iter().zip(&p).map(|(c, pj)| c * pj).sum::<f64>()
}

/// `sum_k c_k * Wbar_k(x)`, computed as `sum_j P(N = j) * sum_{k > j} c_k`.
pub(crate) fn mixture_sf(coeffs: &[f64], rate: f64, x: f64) -> f64 {
    if coeffs.is_empty() {
        return 0.0;
    }
    let p = poisson_pmf(rate * x, coeffs.len());
    let mut tail = 0.0;
    let mut acc = 0.0;
    for j in (0..coeffs.len()).rev() {
        tail += coeffs[j];
        acc += p[j] * tail;
    }
    acc
}

/// `sum_k c_k * W_k(x)`, computed without subtracting from the total mass.
pub(crate) fn mixture_cdf(coeffs: &[f64], rate: f64, x: f64) -> f64 {
    let n = coeffs.len();
    if n == 0 || x == 0.0 {
        return 0.0;
    }
    let lambda = rate * x;
    let p = poisson_pmf(lambda, n);
    let mut cum = 0.0;
    let mut acc = 0.0;
    // P(N = j) contributes the mass of shapes k <= j.
    for j in 1..n {
        cum += coeffs[j - 1];
        acc += p[j] * cum;
    }
    cum += coeffs[n - 1];
    acc + cum * poisson_upper_tail(lambda, n)
}
