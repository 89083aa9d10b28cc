//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Every export returns a JSON string; the plain `*_json` functions carry
//! the logic so they can be tested natively.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use sarmanov_me::aggregation::{aggregate_single, tvar_allocate};
use sarmanov_me::dependence::{beta_sweep, KernelCase, SweepRow};
use sarmanov_me::sarmanov::alpha_bounds_bivariate;
use sarmanov_me::{MixedErlang, SarmanovModel};

fn pair(beta1: f64, w1: &[f64], beta2: f64, w2: &[f64], alpha: f64) -> Result<SarmanovModel, String> {
    let d1 = MixedErlang::new(beta1, w1.to_vec()).map_err(|e| format!("risk 1: {e}"))?;
    let d2 = MixedErlang::new(beta2, w2.to_vec()).map_err(|e| format!("risk 2: {e}"))?;
    SarmanovModel::bivariate(d1, d2, alpha).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct Curve {
    scale: f64,
    alpha_min: f64,
    alpha_max: f64,
    mean: f64,
    variance: f64,
    x: Vec<f64>,
    pdf: Vec<f64>,
    cdf: Vec<f64>,
}

/// Density and df of `X1 + X2` on `points` equally spaced values in `[0, x_max]`.
pub fn aggregate_curve_json(
    beta1: f64,
    w1: &[f64],
    beta2: f64,
    w2: &[f64],
    alpha: f64,
    x_max: f64,
    points: usize,
) -> Result<String, String> {
    if !(x_max > 0.0) || points < 2 {
        return Err("need x_max > 0 and at least two points".into());
    }
    let m = pair(beta1, w1, beta2, w2, alpha)?;
    let s = aggregate_single(&m).map_err(|e| e.to_string())?;
    let x: Vec<f64> = (0..points).map(|i| x_max * i as f64 / (points - 1) as f64).collect();
    let pdf = x.iter().map(|v| s.pdf(*v)).collect::<Result<Vec<_>, _>>().map_err(|e| e.to_string())?;
    let cdf = x.iter().map(|v| s.cdf(*v)).collect::<Result<Vec<_>, _>>().map_err(|e| e.to_string())?;
    let bounds = alpha_bounds_bivariate(m.marginals().next().unwrap(), m.marginals().nth(1).unwrap());
    let curve = Curve {
        scale: s.scale(),
        alpha_min: bounds.lower,
        alpha_max: bounds.upper,
        mean: s.mean(),
        variance: s.variance(),
        x,
        pdf,
        cdf,
    };
    Ok(serde_json::to_string(&curve).expect("curve serializes"))
}

/// TVaR allocation of `X1 + X2` at level `p`.
pub fn allocation_json(beta1: f64, w1: &[f64], beta2: f64, w2: &[f64], alpha: f64, p: f64) -> Result<String, String> {
    let m = pair(beta1, w1, beta2, w2, alpha)?;
    tvar_allocate(&m, p).map(|r| r.to_json()).map_err(|e| e.to_string())
}

fn kernel(name: &str, t: f64) -> Result<KernelCase, String> {
    Ok(match name {
        "density" => KernelCase::Density,
        "exponential" => KernelCase::Exponential,
        "linear" => KernelCase::Linear {
            t1: t,
            t2: t,
            truncated_moments: false,
        },
        "fgm" => KernelCase::Fgm,
        other => return Err(format!("unknown kernel '{other}'")),
    })
}

/// Correlation bounds with both marginals at a common scale over a grid.
pub fn sweep_json(w1: &[f64], w2: &[f64], case: &str, from: f64, to: f64, step: f64, t: f64) -> Result<String, String> {
    if !(from > 0.0 && step > 0.0 && to >= from) || (to - from) / step > 10_000.0 {
        return Err("need 0 < from <= to, step > 0 and at most 10000 grid points".into());
    }
    let count = ((to - from) / step + 1e-9).floor() as usize + 1;
    let grid: Vec<f64> = (0..count).map(|i| from + i as f64 * step).collect();
    let rows: Vec<SweepRow> = beta_sweep(&kernel(case, t)?, w1, w2, &grid).map_err(|e| e.to_string())?;
    Ok(serde_json::to_string(&rows).expect("rows serialize"))
}

#[wasm_bindgen]
pub fn aggregate_curve(
    beta1: f64,
    w1: Vec<f64>,
    beta2: f64,
    w2: Vec<f64>,
    alpha: f64,
    x_max: f64,
    points: usize,
) -> Result<String, JsError> {
    aggregate_curve_json(beta1, &w1, beta2, &w2, alpha, x_max, points).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn allocation(beta1: f64, w1: Vec<f64>, beta2: f64, w2: Vec<f64>, alpha: f64, p: f64) -> Result<String, JsError> {
    allocation_json(beta1, &w1, beta2, &w2, alpha, p).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn correlation_sweep(w1: Vec<f64>, w2: Vec<f64>, case: &str, from: f64, to: f64, step: f64, t: f64) -> Result<String, JsError> {
    sweep_json(&w1, &w2, case, from, to, step, t).map_err(|e| JsError::new(&e))
}
