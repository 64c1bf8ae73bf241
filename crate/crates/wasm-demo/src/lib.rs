//! Browser bindings for three small experiments. Every export returns a JSON
//! string that `www/index.html` plots; the plain functions underneath are what
//! the native tests call.

use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

use disclab::curvature;
use disclab::energy;
use disclab::grid::GridPolicy;
use disclab::optimize::OptimizerConfig;
use disclab::radial;
use disclab::{Model, Params, PolarGrid, Result};

/// Angular resolution used when a radial profile is lifted to the plane.
const LIFT_N_PHI: usize = 32;

fn demo_optimizer() -> OptimizerConfig {
    OptimizerConfig {
        restarts: 0,
        ..OptimizerConfig::default()
    }
}

fn radial_grid(h: f64) -> Result<PolarGrid> {
    GridPolicy {
        n_phi: LIFT_N_PHI,
        ..GridPolicy::default()
    }
    .grid(h)
}

/// Radially symmetric FvK minimizer: deflection and radial displacement on
/// the log-radial nodes, with its energy against the ansatz.
pub fn radial_profile(h: f64, delta: f64) -> Result<Value> {
    let params = Params::new(h, delta, Model::Fvk)?;
    let grid = radial_grid(h)?;
    let (fields, breakdown, report) = radial::radial_minimize(&params, &grid, &demo_optimizer())?;
    let ansatz = energy::ansatz_energy_exact(&params, grid.r_min())?;
    Ok(json!({
        "r": fields.r,
        "v": fields.v,
        "u_r": fields.u_r,
        "normalized": breakdown.normalized(&params),
        "ansatz_normalized": ansatz.normalized(&params),
        "log_h": h.ln().abs(),
        "membrane": breakdown.membrane,
        "bending": breakdown.bending,
        "iterations": report.iterations,
    }))
}

/// Curvature `κ(r)` of the lifted radial minimizer, in units of the cone
/// value `πΔ²`, with the isoperimetric ratio on the same rings.
pub fn curvature_profile(h: f64, delta: f64) -> Result<Value> {
    let params = Params::new(h, delta, Model::Fvk)?;
    let grid = radial_grid(h)?;
    let (fields, _, _) = radial::radial_minimize(&params, &grid, &demo_optimizer())?;
    let (_, v) = radial::lift_to_2d(&fields, &grid)?;
    let target = params.kappa_target();
    let radii = curvature::ring_radii(&grid, grid.r_min(), 1.0);
    let profile = curvature::kappa_fvk(&v, &grid, &radii, target)?;
    let isoper: Vec<f64> = curvature::isoper_rings(&grid, v.values(), curvature::DEFAULT_SLACK)
        .iter()
        .map(|rec| if rec.rhs > 0.0 { rec.lhs / rec.rhs } else { f64::NAN })
        .collect();
    let relative: Vec<f64> = profile.kappa.iter().map(|k| k / target).collect();
    Ok(json!({
        "r": profile.radii,
        "kappa_over_cone": relative,
        "isoper_ratio": isoper,
        "h": h,
    }))
}

/// Continuum energy of the ansatz, `E/(2πΔ²h²)`, at log-spaced thicknesses.
pub fn ansatz_scaling(delta: f64, model: &str, points: usize) -> Result<Value> {
    let model: Model = model.parse()?;
    let points = points.clamp(2, 64);
    let (lo, hi) = (0.002f64.ln(), 0.2f64.ln());
    let mut hs = Vec::with_capacity(points);
    let mut normalized = Vec::with_capacity(points);
    for i in 0..points {
        let h = (hi + (lo - hi) * i as f64 / (points - 1) as f64).exp();
        let params = Params::new(h, delta, model)?;
        let e = energy::ansatz_energy_exact(&params, 0.1 * h)?;
        hs.push(h);
        normalized.push(e.normalized(&params));
    }
    Ok(json!({
        "h": hs,
        "log_h": hs.iter().map(|h| h.ln().abs()).collect::<Vec<_>>(),
        "normalized": normalized,
        "model": model.as_str(),
    }))
}

fn to_js(value: Result<Value>) -> std::result::Result<String, JsValue> {
    value.map(|v| v.to_string()).map_err(|e| JsValue::from_str(&e.to_string()))
}

#[wasm_bindgen(js_name = radialProfile)]
pub fn radial_profile_js(h: f64, delta: f64) -> std::result::Result<String, JsValue> {
    to_js(radial_profile(h, delta))
}

#[wasm_bindgen(js_name = curvatureProfile)]
pub fn curvature_profile_js(h: f64, delta: f64) -> std::result::Result<String, JsValue> {
    to_js(curvature_profile(h, delta))
}

#[wasm_bindgen(js_name = ansatzScaling)]
pub fn ansatz_scaling_js(delta: f64, model: &str, points: usize) -> std::result::Result<String, JsValue> {
    to_js(ansatz_scaling(delta, model, points))
}

#[wasm_bindgen]
pub fn version() -> String {
    disclab::VERSION_STAMP.to_string()
}
