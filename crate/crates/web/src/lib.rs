//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Each exported function has a plain Rust twin returning `Result<_, String>`
//! so the logic can be tested natively.

use nilheat::diffusion::{self, SimConfig};
use nilheat::group::{exp_coords, inverse, log_coords, multiply};
use nilheat::propagator::{assemble_hamiltonian, spectrum, ThetaGrid};
use nilheat::{GroupPoint, GroupTag, QuarticParams};
use serde_json::json;
use wasm_bindgen::prelude::*;

fn coords(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|_| format!("'{}' is not a number", v.trim())))
        .collect()
}

fn point(tag: GroupTag, s: &str) -> Result<GroupPoint, String> {
    GroupPoint::new(tag, &coords(s)?).map_err(|e| e.to_string())
}

/// Product, inverses and exponential coordinates of two group elements, as JSON.
pub fn group_report(group: &str, a: &str, b: &str) -> Result<String, String> {
    let tag: GroupTag = group.parse().map_err(|e: nilheat::Error| e.to_string())?;
    let (g, h) = (point(tag, a)?, point(tag, b)?);
    let gh = multiply(&g, &h).map_err(|e| e.to_string())?;
    let hg = multiply(&h, &g).map_err(|e| e.to_string())?;
    let commutator = multiply(&multiply(&inverse(&g), &inverse(&h)).map_err(|e| e.to_string())?, &gh)
        .map_err(|e| e.to_string())?;
    let log = log_coords(&g);
    let back = exp_coords(&log);
    Ok(json!({
        "product": gh.coords(),
        "reversed_product": hg.coords(),
        "inverse_a": inverse(&g).coords(),
        "commutator": commutator.coords(),
        "log_a": log.coeffs(),
        "exp_log_a": back.coords(),
    })
    .to_string())
}

/// Lowest `count` eigenvalues of `-d^2/dtheta^2 + (alpha theta^2 + beta)^2`.
pub fn quartic_levels(
    alpha: f64,
    beta: f64,
    half_width: f64,
    nodes: usize,
    count: usize,
) -> Result<Vec<f64>, String> {
    let p = QuarticParams::new(alpha, beta).map_err(|e| e.to_string())?;
    let g = ThetaGrid::new(half_width, nodes).map_err(|e| e.to_string())?;
    let dec = spectrum(&assemble_hamiltonian(&p, &g), count.clamp(1, nodes)).map_err(|e| e.to_string())?;
    Ok(dec.energies)
}

/// Coordinate means and variances of simulated endpoints, as JSON.
pub fn diffusion_report(
    group: &str,
    t: f64,
    paths: usize,
    steps: usize,
    seed: u64,
) -> Result<String, String> {
    let tag: GroupTag = group.parse().map_err(|e: nilheat::Error| e.to_string())?;
    let cfg = SimConfig::new(tag, t, paths, steps, seed);
    cfg.validate().map_err(|e| e.to_string())?;
    let s = diffusion::simulate(&cfg).map_err(|e| e.to_string())?;
    let rows: Vec<_> = diffusion::moments(&s)
        .iter()
        .map(|m| json!({ "mean": m.mean, "mean_se": m.mean_se, "var": m.var, "var_se": m.var_se }))
        .collect();
    Ok(json!({ "group": tag.name(), "t": t, "paths": paths, "moments": rows }).to_string())
}

#[wasm_bindgen(js_name = groupReport)]
pub fn group_report_js(group: &str, a: &str, b: &str) -> Result<String, JsError> {
    group_report(group, a, b).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = quarticLevels)]
pub fn quartic_levels_js(
    alpha: f64,
    beta: f64,
    half_width: f64,
    nodes: usize,
    count: usize,
) -> Result<Vec<f64>, JsError> {
    quartic_levels(alpha, beta, half_width, nodes, count).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = diffusionReport)]
pub fn diffusion_report_js(
    group: &str,
    t: f64,
    paths: usize,
    steps: usize,
    seed: u64,
) -> Result<String, JsError> {
    diffusion_report(group, t, paths, steps, seed).map_err(|e| JsError::new(&e))
}
