//! Checks run over many random feasible models.

use sarmanov_me::aggregation::{aggregate_single, tvar_allocate, AggregateRepresentation};
use sarmanov_me::stop_loss::{defective_df_h, delta_series, ReinsuredLaw};
use sarmanov_me::transforms::{convolve, expected_density, rescale, size_biased, squared_density};
use sarmanov_me::MixedErlang;

use super::{naive_pdf, upper_limit, Quad, RandomCase};

pub const ADDITIVITY_TOL: f64 = 1e-8;
pub const TRANSFORM_TOL: f64 = 1e-10;
pub const CONVOLUTION_TOL: f64 = 1e-6;
pub const TOTAL_PROBABILITY_TOL: f64 = 1e-7;
pub const DF_IDENTITY_TOL: f64 = 1e-10;

#[derive(Debug, Default)]
pub struct SuiteReport {
    pub models: usize,
    pub additivity: f64,
    pub transforms: f64,
    pub convolution: f64,
    pub total_probability: f64,
    pub df_identity: f64,
    pub failures: Vec<String>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    fn record(&mut self, slot: fn(&mut Self) -> &mut f64, value: f64, tol: f64, what: String) {
        let s = slot(self);
        if !(value <= *s) {
            *s = value;
        }
        if !(value <= tol) {
            self.failures.push(format!("{what}: {value:e} > {tol:e}"));
        }
    }
}

/// `P(X <= x)` from the elementary Erlang sums.
pub fn naive_cdf(d: &MixedErlang, x: f64) -> f64 {
    let bx = d.scale() * x;
    let mut sf = 0.0;
    let mut term = (-bx).exp();
    let mut partial = 0.0;
    for (k, q) in d.weights().iter().enumerate() {
        if k > 0 {
            term *= bx / k as f64;
        }
        partial += term;
        sf += q * partial;
    }
    1.0 - sf
}

fn pdf(d: &MixedErlang, x: f64) -> f64 {
    naive_pdf(d.scale(), d.weights(), x)
}

fn check_transforms(r: &mut SuiteReport, i: usize, d: &MixedErlang, other: &MixedErlang, quad: &Quad) {
    let tag = |what: &str| format!("model {i}: {what}");
    // Squared density: pdf(V) * gamma = pdf^2.
    let v = squared_density(d).unwrap();
    let gamma = expected_density(d);
    let top = upper_limit(d.scale(), d.weights());
    let worst = (0..100)
        .map(|j| {
            let x = top * j as f64 / 99.0;
            (v.pdf(x).unwrap() * gamma - pdf(d, x).powi(2)).abs()
        })
        .fold(0.0, f64::max);
    r.record(|s| &mut s.transforms, worst, TRANSFORM_TOL, tag("squared density identity"));
    let mass = (v.weights().iter().sum::<f64>() - 1.0).abs();
    r.record(|s| &mut s.transforms, mass, 1e-9, tag("squared density mass"));

    // Size bias: mean of G equals E[X^2] / E[X].
    let g = size_biased(d).unwrap();
    let expect = d.raw_moment(2) / d.mean();
    r.record(
        |s| &mut s.transforms,
        (g.mean() - expect).abs() / expect,
        TRANSFORM_TOL,
        tag("size-bias mean"),
    );

    // Rescale keeps the distribution.
    let target = d.scale() * 1.7;
    let up = rescale(d, target).unwrap();
    let worst = (0..20)
        .map(|j| {
            let x = top * (j as f64 + 0.5) / 20.0;
            (up.cdf(x).unwrap() - naive_cdf(d, x)).abs()
        })
        .fold(0.0, f64::max);
    r.record(|s| &mut s.transforms, worst, TRANSFORM_TOL, tag("rescale cdf invariance"));

    // Convolution at a common scale against numerical convolution.
    let common = d.scale().max(other.scale());
    let sum = convolve(&[rescale(d, common).unwrap(), rescale(other, common).unwrap()]).unwrap();
    r.record(
        |s| &mut s.transforms,
        (sum.mean() - d.mean() - other.mean()).abs() / sum.mean(),
        1e-12,
        tag("convolution mean"),
    );
    let hi = top + upper_limit(other.scale(), other.weights());
    let worst = (0..10)
        .map(|j| {
            let y = hi * (j as f64 + 0.5) / 20.0;
            let num = quad.integrate(|x| pdf(d, x) * naive_cdf(other, y - x), 0.0, y);
            (sum.cdf(y).unwrap() - num).abs()
        })
        .fold(0.0, f64::max);
    r.record(|s| &mut s.convolution, worst, CONVOLUTION_TOL, tag("convolution cdf"));
}

pub fn run(cases: &[RandomCase]) -> SuiteReport {
    let mut r = SuiteReport {
        models: cases.len(),
        ..Default::default()
    };
    let quad = Quad::new(20, 60);
    for (i, case) in cases.iter().enumerate() {
        let m = &case.model;
        let tag = |what: &str| format!("model {i}: {what}");

        // Additivity of the TVaR allocation on the pooled portfolio.
        let merged = m.merged().unwrap();
        let s = aggregate_single(&merged).unwrap();
        for p in [0.9, 0.99] {
            let rep = tvar_allocate(&merged, p).unwrap();
            let total: f64 = rep.capitals().iter().sum();
            let tvar = s.tvar(p).unwrap();
            r.record(|s| &mut s.additivity, (total - tvar).abs(), ADDITIVITY_TOL, tag("allocation additivity"));
        }

        // Transform identities on each marginal, paired with the next one.
        let marginals: Vec<&MixedErlang> = m.marginals().collect();
        for (j, d) in marginals.iter().enumerate() {
            let other = marginals[(j + 1) % marginals.len()];
            check_transforms(&mut r, i, d, other, &quad);
        }

        // Total probability.
        let rep = AggregateRepresentation::build(m).unwrap();
        let far = vec![1e4; m.portfolio_count()];
        let joint = rep.joint_df(&far).unwrap();
        r.record(|s| &mut s.total_probability, (joint - 1.0).abs(), TOTAL_PROBABILITY_TOL, tag("joint df limit"));
        let law = ReinsuredLaw::new(m, &case.deductibles).unwrap();
        let reinsured = law.df(1e4).unwrap();
        r.record(
            |s| &mut s.total_probability,
            (reinsured - 1.0).abs(),
            TOTAL_PROBABILITY_TOL,
            tag("reinsured df limit"),
        );

        // F(d) + H(y, d) = F(d + y) for every marginal and every portfolio law.
        let laws = marginals.iter().copied().chain(rep.base.iter()).zip(
            case.deductibles.iter().cycle().copied(),
        );
        for (d, ded) in laws {
            let series = delta_series(d, ded).unwrap();
            let top = upper_limit(d.scale(), d.weights());
            let worst = (0..20)
                .map(|j| {
                    let y = top * j as f64 / 19.0;
                    let lhs = d.cdf(ded).unwrap() + defective_df_h(std::slice::from_ref(&series), y).unwrap();
                    (lhs - d.cdf(ded + y).unwrap()).abs()
                })
                .fold(0.0, f64::max);
            r.record(|s| &mut s.df_identity, worst, DF_IDENTITY_TOL, tag("excess df identity"));
        }
    }
    r
}
