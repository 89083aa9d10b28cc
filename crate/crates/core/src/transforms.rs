//! Weight-vector transforms on mixed Erlang laws.
//!
//! * squared density: `f^2 / E[f(X)]` is `ME(2 beta, V(Q))`
//! * size bias: `x f(x) / E[X]` is `ME(beta, G(Q))`
//! * rescale: `ME(beta1, Q)` equals `ME(beta2, Psi(Q))` for `beta2 >= beta1`
//! * convolution: independent sums at a common rate, `ME(beta, Pi(Q_1, ..., Q_n))`

use crate::error::{Error, Result};
use crate::mixed_erlang::{truncate_tail, MixedErlang};
use crate::numerics::{ln_factorial, Numerics};

/// Unary transforms, applied left to right by [`apply_all`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Transform {
    SquaredDensity,
    SizeBiased,
    Rescale { to: f64 },
}

impl Transform {
    pub fn apply(&self, d: &MixedErlang, num: &Numerics) -> Result<MixedErlang> {
        match *self {
            Transform::SquaredDensity => squared_density_with(d, num),
            Transform::SizeBiased => size_biased(d),
            Transform::Rescale { to } => rescale_with(d, to, num),
        }
    }
}

pub fn apply_all(d: &MixedErlang, chain: &[Transform], num: &Numerics) -> Result<MixedErlang> {
    chain.iter().try_fold(d.clone(), |acc, t| t.apply(&acc, num))
}

struct LnFactorials(Vec<f64>);

impl LnFactorials {
    fn up_to(n: usize) -> Self {
        Self((0..=n as u64).map(ln_factorial).collect())
    }

    #[inline]
    fn binom(&self, n: usize, k: usize) -> f64 {
        self.0[n] - self.0[k] - self.0[n - k]
    }
}

/// Unnormalized squared-density weights
/// `sum_i C(k-1, i-1) q_i q_{k+1-i} / 2^k`, `k = 1..2K-1`.
fn squared_density_numerators(q: &[f64]) -> Vec<f64> {
    let big_k = q.len();
    let len = 2 * big_k - 1;
    let lf = LnFactorials::up_to(len);
    let ln2 = std::f64::consts::LN_2;
    (1..=len)
        .map(|k| {
            let lo = if k + 1 > big_k { k + 1 - big_k } else { 1 };
            let hi = k.min(big_k);
            (lo..=hi)
                .map(|i| {
                    let qq = q[i - 1] * q[k - i];
                    if qq == 0.0 {
                        0.0
                    } else {
                        qq * (lf.binom(k - 1, i - 1) - k as f64 * ln2).exp()
                    }
                })
                .sum()
        })
        .collect()
}

/// `gamma = E[f(X)] = integral of f^2`.
pub fn expected_density(d: &MixedErlang) -> f64 {
    d.scale() * squared_density_numerators(d.weights()).iter().sum::<f64>()
}

pub fn squared_density(d: &MixedErlang) -> Result<MixedErlang> {
    squared_density_with(d, &Numerics::default())
}

pub fn squared_density_with(d: &MixedErlang, num: &Numerics) -> Result<MixedErlang> {
    let nums = squared_density_numerators(d.weights());
    let total: f64 = nums.iter().sum();
    let v: Vec<f64> = nums.into_iter().map(|x| x / total).collect();
    MixedErlang::from_series(2.0 * d.scale(), v, num)
}

/// Mean of the normalized squared density.
pub fn mu_tilde(d: &MixedErlang) -> Result<f64> {
    Ok(squared_density(d)?.mean())
}

pub fn size_biased(d: &MixedErlang) -> Result<MixedErlang> {
    let coeffs = d.size_biased_coefficients();
    let total: f64 = coeffs.iter().sum();
    MixedErlang::new(d.scale(), coeffs.into_iter().map(|c| c / total).collect())
}

pub fn rescale(d: &MixedErlang, beta2: f64) -> Result<MixedErlang> {
    rescale_with(d, beta2, &Numerics::default())
}

/// Re-expresses `d` at the larger rate `beta2` by binomial thinning:
/// `psi_k = sum_i q_i C(k-1, k-i) r^i (1 - r)^(k-i)`, `r = beta / beta2`.
pub fn rescale_with(d: &MixedErlang, beta2: f64, num: &Numerics) -> Result<MixedErlang> {
    let beta1 = d.scale();
    if !(beta2.is_finite()) || beta2 < beta1 {
        return Err(Error::RescaleDownward { from: beta1, to: beta2 });
    }
    if beta2 == beta1 {
        return Ok(d.clone());
    }
    let q = d.weights();
    let r = beta1 / beta2;
    let (ln_r, ln_1r) = (r.ln(), (-r).ln_1p());
    let target = d.total_mass() - num.series_epsilon;

    let mut lf = LnFactorials::up_to(4 * q.len() + 64);
    let mut psi: Vec<f64> = Vec::new();
    let mut cum = 0.0;
    let mut k = 0usize;
    while k < num.k_max {
        k += 1;
        if k >= lf.0.len() {
            lf = LnFactorials::up_to(2 * k);
        }
        let hi = k.min(q.len());
        let v: f64 = (1..=hi)
            .filter(|&i| q[i - 1] > 0.0)
            .map(|i| q[i - 1] * (lf.binom(k - 1, i - 1) + i as f64 * ln_r + (k - i) as f64 * ln_1r).exp())
            .sum();
        cum += v;
        let prev = psi.last().copied().unwrap_or(f64::INFINITY);
        psi.push(v);
        // Past the mode the tail is roughly geometric with ratio v / prev.
        if cum >= target && k > q.len() && v < prev {
            let ratio = v / prev;
            if v * (k as f64 + 1.0) / ((1.0 - ratio) * (1.0 - ratio)) <= 1e-3 * num.series_epsilon {
                break;
            }
        }
    }
    let psi = truncate_tail(psi, num.series_epsilon, num.k_max);
    if d.is_defective() {
        MixedErlang::new_defective(beta2, psi)
    } else {
        MixedErlang::new(beta2, psi)
    }
}

/// Discrete convolution of weight vectors indexed by shape (shapes add).
pub(crate) fn convolve_weights(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len()];
    for (i, x) in a.iter().enumerate() {
        if *x == 0.0 {
            continue;
        }
        for (j, y) in b.iter().enumerate() {
            out[i + j + 1] += x * y;
        }
    }
    out
}

pub fn convolve(ds: &[MixedErlang]) -> Result<MixedErlang> {
    convolve_with(ds, &Numerics::default())
}

pub fn convolve_with(ds: &[MixedErlang], num: &Numerics) -> Result<MixedErlang> {
    let first = ds
        .first()
        .ok_or_else(|| Error::InvalidWeights("cannot convolve an empty list".into()))?;
    let beta = first.scale();
    let mut acc = first.weights().to_vec();
    for d in &ds[1..] {
        if (d.scale() - beta).abs() > 1e-12 * beta {
            return Err(Error::ScaleMismatch {
                expected: beta,
                found: d.scale(),
            });
        }
        acc = truncate_tail(convolve_weights(&acc, d.weights()), num.series_epsilon, num.k_max);
    }
    MixedErlang::new(beta, acc)
}
