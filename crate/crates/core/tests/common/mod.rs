//! Independent reference computations shared by the integration tests.
//!
//! Nothing here calls the closed forms under test: densities are evaluated
//! term by term and every integral is done with composite Gauss-Legendre.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sarmanov_me::sarmanov::{alpha_bounds_bivariate, Feasibility, PairCoefficient, RiskId};
use sarmanov_me::{MixedErlang, Numerics, SarmanovModel};

pub mod suite;

/// Nodes and weights of the `n`-point Gauss-Legendre rule on [-1, 1].
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}

pub struct Quad {
    rule: Vec<(f64, f64)>,
    pub panels: usize,
}

impl Quad {
    pub fn new(points: usize, panels: usize) -> Self {
        Self {
            rule: gauss_legendre(points),
            panels,
        }
    }

    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        let h = (b - a) / self.panels as f64;
        let mut total = 0.0;
        for p in 0..self.panels {
            let lo = a + p as f64 * h;
            let mid = lo + 0.5 * h;
            for (x, w) in &self.rule {
                total += w * f(mid + 0.5 * h * x);
            }
        }
        0.5 * h * total
    }

    /// `int_a^b int_{lo(x)}^{hi(x)} f(x, y) dy dx`.
    pub fn integrate2<F, L, H>(&self, f: F, a: f64, b: f64, lo: L, hi: H) -> f64
    where
        F: Fn(f64, f64) -> f64,
        L: Fn(f64) -> f64,
        H: Fn(f64) -> f64,
    {
        self.integrate(|x| self.integrate(|y| f(x, y), lo(x), hi(x)), a, b)
    }
}

/// Term-by-term mixed Erlang density.
pub fn naive_pdf(beta: f64, q: &[f64], x: f64) -> f64 {
    let mut s = 0.0;
    let mut fact = 1.0;
    for (i, qk) in q.iter().enumerate() {
        if i > 0 {
            fact *= i as f64;
        }
        s += qk * beta.powi(i as i32 + 1) * x.powi(i as i32) * (-beta * x).exp() / fact;
    }
    s
}

/// Upper end of an integration range that leaves less than `1e-16` of the mass.
pub fn upper_limit(beta: f64, q: &[f64]) -> f64 {
    let k = q.len() as f64;
    (k + 40.0 + 8.0 * k.sqrt()) / beta
}

/// A bivariate Sarmanov density built from scratch.
pub struct Bivariate {
    pub b1: f64,
    pub q1: Vec<f64>,
    pub b2: f64,
    pub q2: Vec<f64>,
    pub alpha: f64,
    pub g1: f64,
    pub g2: f64,
    pub t1: f64,
    pub t2: f64,
    pub quad: Quad,
}

impl Bivariate {
    pub fn new(b1: f64, q1: &[f64], b2: f64, q2: &[f64], alpha: f64) -> Self {
        let quad = Quad::new(24, 200);
        let t1 = upper_limit(b1, q1);
        let t2 = upper_limit(b2, q2);
        let g1 = quad.integrate(|x| naive_pdf(b1, q1, x).powi(2), 0.0, t1);
        let g2 = quad.integrate(|x| naive_pdf(b2, q2, x).powi(2), 0.0, t2);
        Self {
            b1,
            q1: q1.to_vec(),
            b2,
            q2: q2.to_vec(),
            alpha,
            g1,
            g2,
            t1,
            t2,
            quad,
        }
    }

    pub fn f1(&self, x: f64) -> f64 {
        naive_pdf(self.b1, &self.q1, x)
    }

    pub fn f2(&self, x: f64) -> f64 {
        naive_pdf(self.b2, &self.q2, x)
    }

    pub fn h(&self, x1: f64, x2: f64) -> f64 {
        let (f1, f2) = (self.f1(x1), self.f2(x2));
        f1 * f2 * (1.0 + self.alpha * (f1 - self.g1) * (f2 - self.g2))
    }

    /// `P(X1 + X2 <= y)`.
    pub fn sum_cdf(&self, y: f64) -> f64 {
        self.quad.integrate2(|a, b| self.h(a, b), 0.0, y, |_| 0.0, |a| y - a)
    }

    /// `E[g(X1, X2) 1{X1 + X2 <= y}]`.
    pub fn sum_below<G: Fn(f64, f64) -> f64>(&self, g: G, y: f64) -> f64 {
        self.quad
            .integrate2(|a, b| g(a, b) * self.h(a, b), 0.0, y, |_| 0.0, |a| y - a)
    }

    pub fn expectation<G: Fn(f64, f64) -> f64>(&self, g: G) -> f64 {
        self.quad
            .integrate2(|a, b| g(a, b) * self.h(a, b), 0.0, self.t1, |_| 0.0, |_| self.t2)
    }

    /// Smallest `y` with `P(X1 + X2 <= y) >= p`, by bisection on the oracle cdf.
    pub fn sum_quantile(&self, p: f64) -> f64 {
        let (mut lo, mut hi) = (0.0, self.t1 + self.t2);
        while hi - lo > 1e-11 {
            let mid = 0.5 * (lo + hi);
            if self.sum_cdf(mid) >= p {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    }
}

/// A feasible random model with at most `max_risks` risks and matching
/// positive deductibles.
pub struct RandomCase {
    pub model: SarmanovModel,
    pub deductibles: Vec<f64>,
}

fn random_marginal(rng: &mut ChaCha8Rng) -> MixedErlang {
    let beta = rng.random_range(0.3..3.0);
    let len = rng.random_range(1..=4);
    let mut w: Vec<f64> = (0..len)
        .map(|_| if rng.random_bool(0.2) { 0.0 } else { rng.random_range(0.05..1.0) })
        .collect();
    if w.iter().all(|x| *x == 0.0) {
        w[0] = 1.0;
    }
    let total: f64 = w.iter().sum();
    MixedErlang::new(beta, w.into_iter().map(|x| x / total).collect()).unwrap()
}

pub fn random_case(rng: &mut ChaCha8Rng, max_risks: usize) -> RandomCase {
    let zeta = rng.random_range(2..=max_risks);
    let n = rng.random_range(1..=zeta.min(3));
    // Cut the risks into n nonempty portfolios.
    let mut sizes = vec![1; n];
    for _ in n..zeta {
        let i = rng.random_range(0..n);
        sizes[i] += 1;
    }
    let portfolios: Vec<Vec<MixedErlang>> = sizes
        .iter()
        .map(|k| (0..*k).map(|_| random_marginal(rng)).collect())
        .collect();
    let ids: Vec<RiskId> = sizes
        .iter()
        .enumerate()
        .flat_map(|(a, k)| (0..*k).map(move |s| RiskId::new(a, s)))
        .collect();
    let mut pairs = Vec::new();
    for (i, a) in ids.iter().enumerate() {
        for b in &ids[i + 1..] {
            if rng.random_bool(0.7) {
                let bounds = alpha_bounds_bivariate(&portfolios[a.portfolio][a.position], &portfolios[b.portfolio][b.position]);
                let u: f64 = rng.random_range(-1.0..1.0);
                let alpha = if u < 0.0 { -u * bounds.lower } else { u * bounds.upper };
                pairs.push(PairCoefficient {
                    first: *a,
                    second: *b,
                    alpha,
                });
            }
        }
    }
    loop {
        let model = SarmanovModel::unvalidated(portfolios.clone(), pairs.clone(), Numerics::default()).unwrap();
        if matches!(model.feasibility_check(), Feasibility::Feasible { .. }) {
            let deductibles = portfolios
                .iter()
                .map(|p| p.iter().map(MixedErlang::mean).sum::<f64>() * rng.random_range(0.3..1.5))
                .collect();
            return RandomCase { model, deductibles };
        }
        for p in &mut pairs {
            p.alpha *= 0.5;
        }
    }
}

pub fn random_cases(seed: u64, count: usize, max_risks: usize) -> Vec<RandomCase> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| random_case(&mut rng, max_risks)).collect()
}
