//! Browser bindings: Gibbs annealing kernels, adaptive particle runs and regime constants.
//!
//! Every exported function takes plain numbers or a JSON array and returns a JSON string.

use fkips::adaptive::{run_adaptive, theoretical_adaptive_flow, AdaptiveConfig, McmcIterations};
use fkips::bounds::{condition_bounded, lp_uniform_bound, r_star_bounded, r_tilde_bounded, RegimeParams};
use fkips::isa::{gibbs_measure, gibbs_tail, metropolis_kernel, minorize, GibbsProblem};
use fkips::measure::dobrushin;
use fkips::rng::Lineage;
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Exact annealing quantities at one inverse temperature.
#[derive(Debug, Serialize)]
pub struct AnnealingView {
    pub beta: f64,
    pub gibbs: Vec<f64>,
    pub tail: f64,
    pub k0: usize,
    pub delta: f64,
    pub gap: f64,
    pub dobrushin_exact: f64,
    pub dobrushin_bound: f64,
}

/// One adaptive run next to its exact reference flow.
#[derive(Debug, Serialize)]
pub struct AdaptiveView {
    pub betas: Vec<f64>,
    pub deltas: Vec<f64>,
    pub kept_fraction: Vec<f64>,
    pub occupations: Vec<Vec<f64>>,
    pub exact: Vec<Vec<f64>>,
    pub l2_bounds: Vec<f64>,
}

/// Bounded-regime constants.
#[derive(Debug, Serialize)]
pub struct RegimeView {
    pub r1_star: f64,
    pub r2_star: f64,
    pub r1_tilde: f64,
    pub r2_tilde: f64,
    pub b_cap: f64,
    pub l2_uniform: f64,
}

fn parse_energy(json: &str) -> Result<Vec<f64>, String> {
    serde_json::from_str(json).map_err(|e| format!("energy must be a JSON array of numbers: {e}"))
}

/// Gibbs measure, level tail and Dobrushin coefficient of `K_beta^{k0}` on a lazy ring.
pub fn annealing(energy: &[f64], beta: f64, k0: usize, level: f64) -> Result<AnnealingView, String> {
    let p = GibbsProblem::on_ring(energy.to_vec()).map_err(|e| e.to_string())?;
    let cert = minorize(&p, k0).map_err(|e| e.to_string())?;
    let kernel = metropolis_kernel(&p, beta).map_err(|e| e.to_string())?;
    Ok(AnnealingView {
        beta,
        gibbs: gibbs_measure(&p, beta).map_err(|e| e.to_string())?.weights().to_vec(),
        tail: gibbs_tail(&p, beta, level).map_err(|e| e.to_string())?,
        k0,
        delta: cert.delta,
        gap: cert.gap,
        dobrushin_exact: dobrushin(&kernel.power(k0 as u64)),
        dobrushin_bound: cert.dobrushin_bound(beta),
    })
}

/// One adaptive run with theoretical mutation and its exact reference.
pub fn adaptive(energy: &[f64], epsilon: f64, n_particles: usize, horizon: usize, seed: u64) -> Result<AdaptiveView, String> {
    let p = GibbsProblem::on_ring(energy.to_vec()).map_err(|e| e.to_string())?;
    let cfg = AdaptiveConfig::new(epsilon).with_iterations(McmcIterations::Fixed(2));
    let reference = theoretical_adaptive_flow(&p, &cfg, horizon).map_err(|e| e.to_string())?;
    let run = run_adaptive(&p, &cfg, n_particles, horizon, Lineage::new(seed, 0), Some(&reference)).map_err(|e| e.to_string())?;
    Ok(AdaptiveView {
        betas: reference.betas.clone(),
        deltas: run.diagnostics.steps.iter().map(|s| s.delta).collect(),
        kept_fraction: run.diagnostics.steps.iter().map(|s| s.kept_fraction).collect(),
        occupations: run
            .occupations(p.dim())
            .map_err(|e| e.to_string())?
            .into_iter()
            .map(|d| d.weights().to_vec())
            .collect(),
        exact: reference.trace.etas.iter().map(|d| d.weights().to_vec()).collect(),
        l2_bounds: reference.l2_bounds(n_particles).map_err(|e| e.to_string())?,
    })
}

/// Bounded-regime constants for `(a, M, N)`.
pub fn regime(a: f64, m: f64, n_particles: u64) -> Result<RegimeView, String> {
    let params = RegimeParams::new(a, m, n_particles).map_err(|e| e.to_string())?;
    let (r1_star, r2_star) = r_star_bounded(&params);
    let (r1_tilde, r2_tilde) = r_tilde_bounded(&params);
    Ok(RegimeView {
        r1_star,
        r2_star,
        r1_tilde,
        r2_tilde,
        b_cap: condition_bounded(m, a).map_err(|e| e.to_string())?,
        l2_uniform: lp_uniform_bound(2, a, n_particles).map_err(|e| e.to_string())?,
    })
}

fn to_json<T: Serialize>(r: Result<T, String>) -> Result<String, JsValue> {
    r.and_then(|v| serde_json::to_string(&v).map_err(|e| e.to_string()))
        .map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = annealing)]
pub fn annealing_json(energy: &str, beta: f64, k0: usize, level: f64) -> Result<String, JsValue> {
    to_json(parse_energy(energy).and_then(|e| annealing(&e, beta, k0, level)))
}

#[wasm_bindgen(js_name = adaptiveRun)]
pub fn adaptive_json(energy: &str, epsilon: f64, n_particles: usize, horizon: usize, seed: u32) -> Result<String, JsValue> {
    to_json(parse_energy(energy).and_then(|e| adaptive(&e, epsilon, n_particles, horizon, seed.into())))
}

#[wasm_bindgen(js_name = regimeConstants)]
pub fn regime_json(a: f64, m: f64, n_particles: u32) -> Result<String, JsValue> {
    to_json(regime(a, m, n_particles.into()))
}
