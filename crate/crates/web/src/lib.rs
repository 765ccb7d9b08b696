//! WebAssembly bindings for `www/index.html`.
//!
//! The logic lives in [`demo`] as plain Rust so it can be tested natively;
//! the exported functions only convert errors to JavaScript values.

pub mod demo;

use wasm_bindgen::prelude::*;

fn js_err(e: String) -> JsValue {
    JsValue::from_str(&e)
}

/// The world description the page starts with.
#[wasm_bindgen]
pub fn sample_world() -> String {
    demo::SAMPLE_WORLD.to_string()
}

/// Decomposition rows (JSON) with the corpus cut to `coverage` and one `k`.
#[wasm_bindgen]
pub fn decompose(world_toml: &str, coverage: f64, k: usize) -> Result<String, JsValue> {
    demo::decompose(world_toml, coverage, k).map_err(js_err)
}

/// Coverage sweep points (JSON) for the chart.
#[wasm_bindgen]
pub fn sweep(world_toml: &str) -> Result<String, JsValue> {
    demo::sweep(world_toml).map_err(js_err)
}

/// Scores one model output; `answers` holds one accepted answer per line.
#[wasm_bindgen]
pub fn score(benchmark: &str, output: &str, answers: &str) -> Result<String, JsValue> {
    demo::score(benchmark, output, answers).map_err(js_err)
}

/// Average gap of two readers over gold and two paraphrasers. `cells` is
/// reader one (gold, first, second) then reader two in the same order.
#[wasm_bindgen]
pub fn average_gap(cells: &[f64]) -> Result<f64, JsValue> {
    demo::average_gap(cells).map_err(js_err)
}
