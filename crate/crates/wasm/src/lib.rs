//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Every exported function has a plain Rust counterpart returning
//! `Result<_, String>` so the logic can be tested natively.

use wasm_bindgen::prelude::*;

use harris_core::birth::{empirical_distribution, simulate_ensemble, solve_forward_odes};
use harris_core::dist::{harris_mean_var, harris_pmf, PmfTable};
use harris_core::mixture::sample_model2_ensemble;
use harris_core::validate::{chi_square_gof, counts_by_index};
use harris_core::{HarrisParams, MixtureParams, ProcessParams};

/// Largest sample the page may request in one call.
pub const MAX_REPLICAS: u32 = 1_000_000;

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

/// Probabilities `P(X = 1 + nk)` for `n = 0, 1, ...` until the remaining
/// mass is certified below `tail`.
pub fn pmf_values(m: f64, k: u32, tail: f64) -> Result<Vec<f64>, String> {
    let p = HarrisParams::new(m, k).map_err(err)?;
    Ok(PmfTable::build(p, tail).map_err(err)?.probabilities())
}

/// `[mean, variance]` of the Harris law.
pub fn moments(m: f64, k: u32) -> Result<Vec<f64>, String> {
    let (mean, var) = harris_mean_var(&HarrisParams::new(m, k).map_err(err)?);
    Ok(vec![mean, var])
}

/// Forward-equation solution interleaved with the closed form:
/// `[ode_0, closed_0, ode_1, closed_1, ...]`.
pub fn ode_comparison(lambda: f64, k: u32, t: f64) -> Result<Vec<f64>, String> {
    let p = ProcessParams::new(lambda, k).map_err(err)?;
    let sol = solve_forward_odes(&p, t, 1e-12).map_err(err)?;
    if t == 0.0 {
        return Ok(vec![1.0, 1.0]);
    }
    let h = p.harris_at(t).map_err(err)?;
    Ok(sol
        .probs
        .iter()
        .enumerate()
        .flat_map(|(n, &q)| [q, harris_pmf(&h, n as u64)])
        .collect())
}

/// Simulated histogram by count index `n`, followed by the GoF p-value:
/// `[count_0, count_1, ..., count_N, p_value]`.
///
/// `model` is `"birth"` (rate parameter `lambda`) or `"mixture"` (gamma
/// rate `a`); `param` carries that value.
pub fn simulate_counts(
    model: &str,
    param: f64,
    k: u32,
    t: f64,
    replicas: u32,
    seed: u64,
) -> Result<Vec<f64>, String> {
    if replicas == 0 || replicas > MAX_REPLICAS {
        return Err(format!("replicas must lie in 1..={MAX_REPLICAS}"));
    }
    let (values, harris) = match model {
        "birth" => {
            let p = ProcessParams::new(param, k).map_err(err)?;
            let paths = simulate_ensemble(&p, t, replicas as usize, seed).map_err(err)?;
            (
                empirical_distribution(&paths, t).map_err(err)?,
                p.harris_at(t).map_err(err)?,
            )
        }
        "mixture" => {
            let p = MixtureParams::new(param, k).map_err(err)?;
            let draws = sample_model2_ensemble(&p, t, replicas as usize, seed).map_err(err)?;
            let mut counts = std::collections::BTreeMap::new();
            for x in draws {
                *counts.entry(x).or_insert(0u64) += 1;
            }
            (counts, p.harris_at(t).map_err(err)?)
        }
        other => {
            return Err(format!(
                "unknown model {other:?}; use \"birth\" or \"mixture\""
            ))
        }
    };
    let by_index = counts_by_index(&values, k).map_err(err)?;
    let top = by_index.keys().next_back().copied().unwrap_or(0);
    let mut out: Vec<f64> = (0..=top)
        .map(|n| by_index.get(&n).copied().unwrap_or(0) as f64)
        .collect();
    let p_value = chi_square_gof(
        &by_index,
        |n| harris_pmf(&harris, n),
        u64::from(replicas),
        0.01,
    )
    .map(|g| g.p_value)
    .unwrap_or(f64::NAN);
    out.push(p_value);
    Ok(out)
}

/// Scale `m` induced by a birth process at time `t`, or by the mixture
/// model when `model` is `"mixture"`.
pub fn induced_scale(model: &str, param: f64, k: u32, t: f64) -> Result<f64, String> {
    let h = match model {
        "birth" => ProcessParams::new(param, k).map_err(err)?.harris_at(t),
        "mixture" => MixtureParams::new(param, k).map_err(err)?.harris_at(t),
        other => return Err(format!("unknown model {other:?}")),
    };
    Ok(h.map_err(err)?.m())
}

#[wasm_bindgen(js_name = harrisPmf)]
pub fn js_harris_pmf(m: f64, k: u32, tail: f64) -> Result<Vec<f64>, JsError> {
    pmf_values(m, k, tail).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = harrisMoments)]
pub fn js_moments(m: f64, k: u32) -> Result<Vec<f64>, JsError> {
    moments(m, k).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = odeComparison)]
pub fn js_ode_comparison(lambda: f64, k: u32, t: f64) -> Result<Vec<f64>, JsError> {
    ode_comparison(lambda, k, t).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = simulateCounts)]
pub fn js_simulate_counts(
    model: &str,
    param: f64,
    k: u32,
    t: f64,
    replicas: u32,
    seed: u32,
) -> Result<Vec<f64>, JsError> {
    simulate_counts(model, param, k, t, replicas, u64::from(seed)).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = inducedScale)]
pub fn js_induced_scale(model: &str, param: f64, k: u32, t: f64) -> Result<f64, JsError> {
    induced_scale(model, param, k, t).map_err(|e| JsError::new(&e))
}
