//! Closed forms against brute-force numerical integration of the densities.

mod common;

use common::{naive_pdf, upper_limit, Bivariate, Quad};
use sarmanov_me::aggregation::{aggregate_single, tvar_allocate, AggregateRepresentation};
use sarmanov_me::dependence::{pearson_rho, KernelCase};
use sarmanov_me::sarmanov::{PairCoefficient, RiskId};
use sarmanov_me::stop_loss::{delta_series, partial_expectation_u, ReinsuredLaw};
use sarmanov_me::transforms::{expected_density, mu_tilde, rescale, squared_density};
use sarmanov_me::{MixedErlang, Numerics, SarmanovModel};

const B1: f64 = 0.9;
const Q1: [f64; 2] = [0.4, 0.6];
const B2: f64 = 0.95;
const Q2: [f64; 2] = [0.8, 0.2];

fn me(beta: f64, q: &[f64]) -> MixedErlang {
    MixedErlang::new(beta, q.to_vec()).unwrap()
}

fn one_portfolio(alpha: f64) -> SarmanovModel {
    SarmanovModel::bivariate(me(B1, &Q1), me(B2, &Q2), alpha).unwrap()
}

fn two_portfolios(alpha: f64) -> SarmanovModel {
    let pair = PairCoefficient {
        first: RiskId::new(0, 0),
        second: RiskId::new(1, 0),
        alpha,
    };
    SarmanovModel::new(vec![vec![me(B1, &Q1)], vec![me(B2, &Q2)]], vec![pair], Numerics::default()).unwrap()
}

fn oracle(alpha: f64) -> Bivariate {
    let mut b = Bivariate::new(B1, &Q1, B2, &Q2, alpha);
    b.quad = Quad::new(16, 48);
    b
}

fn laws() -> Vec<MixedErlang> {
    vec![
        me(B1, &Q1),
        me(1.3, &[0.1, 0.0, 0.3, 0.2, 0.4]),
        me(0.25, &[0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0]),
    ]
}

#[test]
fn cdf_and_partial_expectation_match_quadrature() {
    let quad = Quad::new(24, 200);
    for d in laws() {
        let (b, q) = (d.scale(), d.weights().to_vec());
        let top = upper_limit(b, &q);
        for x in [0.1, 0.7, 2.0, 5.0, 11.0, 30.0] {
            let cdf = quad.integrate(|t| naive_pdf(b, &q, t), 0.0, x);
            assert!((d.cdf(x).unwrap() - cdf).abs() < 1e-8, "cdf at {x}");
            let pe = quad.integrate(|t| t * naive_pdf(b, &q, t), x, top.max(x));
            assert!((d.partial_expectation(x).unwrap() - pe).abs() < 1e-8, "partial expectation at {x}");
        }
    }
}

#[test]
fn density_maximum_matches_a_fine_scan() {
    for d in laws() {
        let top = upper_limit(d.scale(), d.weights());
        let step = top / 1e6;
        let scan = (0..=1_000_000)
            .map(|i| naive_pdf(d.scale(), d.weights(), i as f64 * step))
            .fold(0.0, f64::max);
        let m = d.pdf_max();
        assert!(m >= scan - 1e-12, "{m} below scan {scan}");
        assert!((m - scan) / scan < 1e-9, "{m} vs {scan}");
    }
}

#[test]
fn squared_density_quantities_match_quadrature() {
    let quad = Quad::new(24, 200);
    for d in laws() {
        let (b, q) = (d.scale(), d.weights().to_vec());
        let top = upper_limit(b, &q);
        let gamma = quad.integrate(|t| naive_pdf(b, &q, t).powi(2), 0.0, top);
        assert!((expected_density(&d) - gamma).abs() < 1e-12 * gamma.max(1.0));
        let mt = quad.integrate(|t| t * naive_pdf(b, &q, t).powi(2), 0.0, top) / gamma;
        assert!((mu_tilde(&d).unwrap() - mt).abs() < 1e-10 * mt);
        let v = squared_density(&d).unwrap();
        for x in [0.0, 0.5, 3.0, 9.0] {
            let direct = naive_pdf(b, &q, x).powi(2) / gamma;
            assert!((v.pdf(x).unwrap() - direct).abs() < 1e-10);
        }
    }
}

#[test]
fn joint_density_is_normalized_with_the_right_marginals() {
    let m = one_portfolio(2.5);
    let o = oracle(2.5);
    let quad = Quad::new(16, 48);
    let total = quad.integrate2(|a, b| m.joint_pdf(&[a, b]).unwrap(), 0.0, o.t1, |_| 0.0, |_| o.t2);
    assert!((total - 1.0).abs() < 1e-10, "{total}");
    for x in [0.3, 1.0, 4.0] {
        let marginal = quad.integrate(|b| m.joint_pdf(&[x, b]).unwrap(), 0.0, o.t2);
        assert!((marginal - o.f1(x)).abs() < 1e-10);
        for y in [0.2, 2.5] {
            assert!((m.joint_pdf(&[x, y]).unwrap() - o.h(x, y)).abs() < 1e-12);
        }
    }
}

#[test]
fn joint_df_of_two_portfolios_matches_quadrature() {
    let rep = AggregateRepresentation::build(&two_portfolios(2.5)).unwrap();
    let o = oracle(2.5);
    for (s1, s2) in [(2.0, 2.0), (0.5, 3.0), (4.0, 1.0), (8.0, 6.0)] {
        let direct = o.quad.integrate2(|a, b| o.h(a, b), 0.0, s1, |_| 0.0, |_| s2);
        let df = rep.joint_df(&[s1, s2]).unwrap();
        assert!((df - direct).abs() < 1e-6, "({s1}, {s2}): {df} vs {direct}");
    }
}

#[test]
fn joint_pdf_is_the_mixed_derivative_of_joint_df() {
    let rep = AggregateRepresentation::build(&two_portfolios(2.5)).unwrap();
    let o = oracle(2.5);
    let h = 1e-3;
    for (s1, s2) in [(1.0, 1.0), (2.5, 0.7), (4.0, 3.0)] {
        let f = |a: f64, b: f64| rep.joint_df(&[a, b]).unwrap();
        let fd = (f(s1 + h, s2 + h) - f(s1 + h, s2 - h) - f(s1 - h, s2 + h) + f(s1 - h, s2 - h)) / (4.0 * h * h);
        let pdf = rep.joint_pdf(&[s1, s2]).unwrap();
        assert!((fd - pdf).abs() < 1e-5, "{fd} vs {pdf}");
        assert!((pdf - o.h(s1, s2)).abs() < 1e-12);
    }
    let total = o.quad.integrate2(|a, b| rep.joint_pdf(&[a, b]).unwrap(), 0.0, o.t1, |_| 0.0, |_| o.t2);
    assert!((total - 1.0).abs() < 1e-10);
}

#[test]
fn aggregate_agrees_with_joint_df_and_quadrature() {
    let m = one_portfolio(2.5);
    let s = aggregate_single(&m).unwrap();
    let rep = AggregateRepresentation::build(&m).unwrap();
    let o = oracle(2.5);
    for i in 0..20 {
        let y = 0.25 + 0.75 * i as f64;
        assert!((s.cdf(y).unwrap() - rep.joint_df(&[y]).unwrap()).abs() < 1e-10);
    }
    for y in [0.5, 2.0, 4.5, 9.0, 15.0] {
        let direct = o.sum_cdf(y);
        assert!((s.cdf(y).unwrap() - direct).abs() < 1e-9, "{y}");
    }
}

#[test]
fn allocation_matches_quadrature() {
    for alpha in [-1.0, 2.5] {
        let m = one_portfolio(alpha);
        let o = oracle(alpha);
        let p = 0.99;
        let report = tvar_allocate(&m, p).unwrap();
        let var = o.sum_quantile(p);
        assert!((report.var - var).abs() < 1e-7, "{} vs {var}", report.var);
        let mean1 = o.expectation(|a, _| a);
        let mean2 = o.expectation(|_, b| b);
        let c1 = (mean1 - o.sum_below(|a, _| a, var)) / (1.0 - p);
        let c2 = (mean2 - o.sum_below(|_, b| b, var)) / (1.0 - p);
        let c = report.capitals();
        assert!((c[0] - c1).abs() < 1e-6, "{} vs {c1}", c[0]);
        assert!((c[1] - c2).abs() < 1e-6, "{} vs {c2}", c[1]);
    }
}

#[test]
fn small_deductible_recovers_the_aggregate() {
    let m = one_portfolio(2.5);
    let s = aggregate_single(&m).unwrap();
    let law = ReinsuredLaw::new(&m, &[1e-9]).unwrap();
    assert!(law.atom() < 1e-4);
    for y in [0.5, 2.0, 6.0, 12.0] {
        assert!((law.df(y).unwrap() - s.cdf(y).unwrap()).abs() < 1e-4);
    }
}

#[test]
fn reinsured_law_matches_quadrature() {
    let m = two_portfolios(2.5);
    let o = oracle(2.5);
    let rep = AggregateRepresentation::build(&m).unwrap();
    let d = [1.5, 1.0];
    let law = ReinsuredLaw::new(&m, &d).unwrap();
    assert!((law.atom() - rep.joint_df(&d).unwrap()).abs() < 1e-12);

    // R = (X1 - d1)_+ + (X2 - d2)_+; split at the kinks x1 = d1 and x2 = d2.
    let below = |g: &dyn Fn(f64, f64) -> f64, y: f64| {
        let inner = |a: f64, hi: f64| {
            let f = |b: f64| g(a, b) * o.h(a, b);
            o.quad.integrate(f, 0.0, d[1]) + o.quad.integrate(f, d[1], hi)
        };
        o.quad.integrate(|a| inner(a, d[1] + y), 0.0, d[0])
            + o.quad.integrate(|a| inner(a, d[1] + y - (a - d[0])), d[0], d[0] + y)
    };
    let excess1 = |a: f64, _: f64| (a - d[0]).max(0.0);
    let excess2 = |_: f64, b: f64| (b - d[1]).max(0.0);
    let full1 = o.quad.integrate(|a| (a - d[0]) * o.f1(a), d[0], o.t1);
    let full2 = o.quad.integrate(|b| (b - d[1]) * o.f2(b), d[1], o.t2);

    let mut last = law.df(0.0).unwrap();
    for y in [0.0, 0.4, 1.0, 2.5, 5.0, 10.0] {
        let df = law.df(y).unwrap();
        assert!(df >= last - 1e-15);
        last = df;
        assert!((df - below(&|_, _| 1.0, y)).abs() < 1e-8, "df at {y}");
        let t1 = full1 - below(&excess1, y);
        let t2 = full2 - below(&excess2, y);
        assert!((law.tail_contribution(0, y).unwrap() - t1).abs() < 1e-8, "T1 at {y}");
        assert!((law.tail_contribution(1, y).unwrap() - t2).abs() < 1e-8, "T2 at {y}");
    }
    assert!((law.df(200.0).unwrap() - 1.0).abs() < 1e-9);
}

#[test]
fn excess_partial_expectation_matches_quadrature() {
    let o = oracle(0.0);
    let (d1, d2) = (1.2, 0.8);
    let s1 = delta_series(&rescale(&me(B1, &Q1), 1.9).unwrap(), d1).unwrap();
    let s2 = delta_series(&rescale(&me(B2, &Q2), 1.9).unwrap(), d2).unwrap();
    for y in [0.0, 0.5, 2.0, 6.0] {
        let f = |a: f64, b: f64| (b - d2) * o.f1(a) * o.f2(b);
        let region = o.quad.integrate2(f, d1, d1 + y, |_| d2, |a| d2 + y - (a - d1));
        let all = o.quad.integrate2(f, d1, o.t1, |_| d2, |_| o.t2);
        let u = partial_expectation_u(std::slice::from_ref(&s1), &s2, y).unwrap();
        assert!((u - (all - region)).abs() < 1e-9, "{y}: {u} vs {}", all - region);
    }
}

#[test]
fn density_kernel_correlation_matches_quadrature() {
    let (d1, d2) = (me(B1, &Q1), me(B2, &Q2));
    for alpha in [-1.5, 2.5] {
        let o = oracle(alpha);
        let m1 = o.expectation(|a, _| a);
        let m2 = o.expectation(|_, b| b);
        let v1 = o.expectation(|a, _| (a - m1).powi(2));
        let v2 = o.expectation(|_, b| (b - m2).powi(2));
        let cov = o.expectation(|a, b| (a - m1) * (b - m2));
        let rho = cov / (v1 * v2).sqrt();
        let closed = pearson_rho(&KernelCase::Density, &d1, &d2, alpha).unwrap();
        assert!((closed - rho).abs() < 1e-9, "{closed} vs {rho}");
    }
}
