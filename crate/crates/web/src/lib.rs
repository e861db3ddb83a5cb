//! wasm-bindgen wrappers for the browser demo in `www/`.
//!
//! Every export takes a model as JSON (same fields as the CLI model file)
//! and returns a JSON string. The `*_json` functions do the work and are
//! plain Rust so they can be tested natively.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use admcap::evaluation::{
    absolute_gap, always_serve_policy, matched_action_percentage, myopic_policy, simulate, SimConfig,
};
use admcap::experiment::ModelSpec;
use admcap::model::{ModelConfig, State};
use admcap::solve::{policy_gain, relative_value_iteration, Policy, RviOptions};
use admcap::space::{build_instance, count_states, MdpInstance};

/// Browsers get slow well before the native memory budget matters.
pub const MAX_DEMO_STATES: u128 = 60_000;

fn config(model_json: &str) -> Result<ModelConfig, String> {
    let spec: ModelSpec = serde_json::from_str(model_json).map_err(|e| format!("bad model: {e}"))?;
    let cfg = spec.config().map_err(|e| e.to_string())?;
    let n = count_states(&cfg);
    if n > MAX_DEMO_STATES {
        return Err(format!("{n} states is too many for the demo (limit {MAX_DEMO_STATES})"));
    }
    Ok(cfg)
}

fn instance(cfg: &ModelConfig, eliminate: bool) -> Result<MdpInstance, String> {
    build_instance(cfg, eliminate).map_err(|e| e.to_string())
}

fn to_json(v: &impl Serialize) -> String {
    serde_json::to_string(v).expect("plain data serializes")
}

#[derive(Serialize)]
struct Sizes {
    states: usize,
    actions: usize,
    reduced_actions: usize,
    notes: Vec<String>,
}

pub fn sizes_json(model_json: &str) -> Result<String, String> {
    let cfg = config(model_json)?;
    let full = instance(&cfg, false)?;
    let reduced = instance(&cfg, true)?;
    Ok(to_json(&Sizes {
        states: full.num_states(),
        actions: full.num_actions(),
        reduced_actions: reduced.num_actions(),
        notes: reduced.stats.notes.clone(),
    }))
}

#[derive(Serialize)]
struct Row {
    method: &'static str,
    gain: f64,
    ag: Option<f64>,
    map: f64,
}

#[derive(Serialize)]
struct Comparison {
    states: usize,
    rows: Vec<Row>,
}

/// Optimal gain next to the two benchmark heuristics.
pub fn compare_json(model_json: &str) -> Result<String, String> {
    let cfg = config(model_json)?;
    let inst = instance(&cfg, false)?;
    let opt = relative_value_iteration(&inst.mdp, &RviOptions::default()).map_err(|e| e.to_string())?;
    let mut rows = vec![Row { method: "OPT", gain: opt.gain, ag: Some(0.0), map: 100.0 }];
    for (name, p) in [("MP", myopic_policy(&inst.mdp)), ("AP", always_serve_policy(&inst, false))] {
        let gain = policy_gain(&inst.mdp, &p).map_err(|e| e.to_string())?;
        let map = matched_action_percentage(&p, &opt.policy).map_err(|e| e.to_string())?;
        rows.push(Row { method: name, gain, ag: absolute_gap(gain, opt.gain), map });
    }
    Ok(to_json(&Comparison { states: inst.num_states(), rows }))
}

#[derive(Serialize)]
struct Sim {
    method: String,
    mean: f64,
    half_width: f64,
    periods: u64,
}

pub fn simulate_json(model_json: &str, method: &str, seed: u64, periods: u64) -> Result<String, String> {
    let cfg = config(model_json)?;
    let inst = instance(&cfg, false)?;
    let policy: Policy = match method.to_ascii_uppercase().as_str() {
        "OPT" => relative_value_iteration(&inst.mdp, &RviOptions::default()).map_err(|e| e.to_string())?.policy,
        "MP" => myopic_policy(&inst.mdp),
        "AP" => always_serve_policy(&inst, false),
        other => return Err(format!("unknown policy `{other}` (OPT, MP or AP)")),
    };
    let sim_cfg = SimConfig { seed, warmup: periods / 10, horizon: periods, initial: State::empty(), batches: 20 };
    let r = simulate(&inst, &policy, &sim_cfg).map_err(|e| e.to_string())?;
    Ok(to_json(&Sim {
        method: method.to_ascii_uppercase(),
        mean: r.mean,
        half_width: r.half_width,
        periods: r.periods,
    }))
}

#[wasm_bindgen]
pub fn sizes(model_json: &str) -> Result<String, JsError> {
    sizes_json(model_json).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn compare(model_json: &str) -> Result<String, JsError> {
    compare_json(model_json).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = simulatePolicy)]
pub fn simulate_policy(model_json: &str, method: &str, seed: u32, periods: u32) -> Result<String, JsError> {
    simulate_json(model_json, method, seed as u64, periods as u64).map_err(|e| JsError::new(&e))
}
