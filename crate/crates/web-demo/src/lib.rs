//! Browser bindings for the demo page in `www/`. Every export returns a JSON
//! string; the `*_value` functions hold the logic and also run natively.

use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

use mfsobol::mf_pce::{correction_values, MfConfig};
use mfsobol::orthopoly::VariableSpec;
use mfsobol::pce::{project, Provenance};
use mfsobol::sobol::all_indices;
use mfsobol::sparse_grid::smolyak_grid;
use mfsobol::study::{decay_report, ishigami_analytic};
use mfsobol::{Error, Result};

/// Highest sparse level the page may request.
pub const MAX_LEVEL: u32 = 7;

fn ishigami(a: f64, b: f64, x: &[f64]) -> f64 {
    let s1 = x[0].sin();
    let s2 = x[1].sin();
    s1 + a * s2 * s2 + b * x[2].powi(4) * s1
}

fn specs() -> Vec<VariableSpec> {
    use std::f64::consts::PI;
    (1..=3).map(|i| VariableSpec::uniform(format!("x{i}"), -PI, PI).expect("valid range")).collect()
}

fn check_level(w: u32) -> Result<()> {
    if w > MAX_LEVEL {
        return Err(Error::Config(format!("level {w} exceeds the demo limit {MAX_LEVEL}")));
    }
    Ok(())
}

/// Analytic and level-`w` expansion indices of the Ishigami function.
pub fn ishigami_indices_value(a: f64, b: f64, w: u32) -> Result<Value> {
    check_level(w)?;
    let specs = specs();
    let grid = smolyak_grid(3, w, &specs)?;
    let values: Vec<f64> = grid.physical_nodes().iter().map(|x| ishigami(a, b, x)).collect();
    let e = project(&grid, &values, Provenance::HF)?;
    let pce = all_indices(&e)?;
    let exact = ishigami_analytic(a, b);
    let labels = ["x1", "x2", "x3", "x1x3"];
    let pick = |r: &mfsobol::SobolReport| -> Vec<f64> {
        vec![r.first_order(0), r.first_order(1), r.first_order(2), r.subset(&[0, 2])]
    };
    Ok(json!({
        "labels": labels,
        "nodes": grid.len(),
        "terms": e.len(),
        "pce": { "indices": pick(&pce), "total": pce.total_indices, "variance": pce.variance },
        "analytic": { "indices": pick(&exact), "total": exact.total_indices, "variance": exact.variance },
    }))
}

/// Nodes and weights of the two-dimensional sparse grid at level `w`.
pub fn sparse_grid_value(w: u32, normal: bool) -> Result<Value> {
    check_level(w)?;
    let spec = |name: &str| if normal { VariableSpec::normal(name, 0.0, 1.0) } else { VariableSpec::uniform(name, -1.0, 1.0) };
    let specs = vec![spec("x")?, spec("y")?];
    let grid = smolyak_grid(2, w, &specs)?;
    Ok(json!({
        "nodes": grid.nodes,
        "weights": grid.weights,
        "terms": grid.terms.len(),
    }))
}

/// Coefficient spectra of HF (level `w - q`), LF (level `w`) and correction
/// (level `w - q`) for an Ishigami LF variant with parameters `(a_lf, b_lf)`.
pub fn decay_value(a_lf: f64, b_lf: f64, w: u32, q: u32) -> Result<Value> {
    check_level(w)?;
    let cfg = MfConfig::new(w, q)?;
    let specs = specs();
    let hf = |x: &[f64]| ishigami(7.0, 0.1, x);
    let lf = |x: &[f64]| ishigami(a_lf, b_lf, x);

    let lf_grid = smolyak_grid(3, w, &specs)?;
    let lf_values: Vec<f64> = lf_grid.physical_nodes().iter().map(|x| lf(x)).collect();
    let lf_pce = project(&lf_grid, &lf_values, Provenance::LF)?;

    let cr_grid = smolyak_grid(3, cfg.correction_level(), &specs)?;
    let nodes = cr_grid.physical_nodes();
    let hf_values: Vec<f64> = nodes.iter().map(|x| hf(x)).collect();
    let lf_on_cr: Vec<f64> = nodes.iter().map(|x| lf(x)).collect();
    let hf_pce = project(&cr_grid, &hf_values, Provenance::HF)?;
    let cr_pce = project(&cr_grid, &correction_values(&hf_values, &lf_on_cr)?, Provenance::Correction)?;

    let series: Vec<Value> = decay_report(&[hf_pce, lf_pce, cr_pce])
        .into_iter()
        .map(|s| json!({ "label": s.provenance.to_string(), "values": s.values }))
        .collect();
    Ok(json!({ "series": series }))
}

fn to_js(v: Result<Value>) -> std::result::Result<String, JsValue> {
    v.map(|v| v.to_string()).map_err(|e| JsValue::from_str(&e.to_string()))
}

#[wasm_bindgen]
pub fn ishigami_indices(a: f64, b: f64, w: u32) -> std::result::Result<String, JsValue> {
    to_js(ishigami_indices_value(a, b, w))
}

#[wasm_bindgen]
pub fn sparse_grid(w: u32, normal: bool) -> std::result::Result<String, JsValue> {
    to_js(sparse_grid_value(w, normal))
}

#[wasm_bindgen]
pub fn decay_spectra(a_lf: f64, b_lf: f64, w: u32, q: u32) -> std::result::Result<String, JsValue> {
    to_js(decay_value(a_lf, b_lf, w, q))
}
