//! Browser bindings. Every export returns a JSON string so the page needs
//! nothing beyond `JSON.parse`.

use kelvin::analytic::NoiseSpec;
use kelvin::experiments::schedule_predictions;
use kelvin::model::{dispersion, ground_state_energy, CouplingScheme, ModelParams};
use kelvin::protocol::{make_schedule, steady_report, Engine, Protocol, ScheduleDescriptor};
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Serialize)]
struct Spectrum {
    k: Vec<usize>,
    epsilon: Vec<f64>,
    e_gs: f64,
}

#[derive(Serialize)]
struct Steady {
    k: Vec<usize>,
    exact: Vec<Option<f64>>,
    analytic: Vec<f64>,
    alpha: Vec<f64>,
    e: f64,
    fidelity: f64,
}

#[derive(Serialize)]
struct Scan {
    theta_over_pi: Vec<f64>,
    e: Vec<f64>,
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

pub fn spectrum_json(n: usize, theta: f64) -> Result<String, String> {
    let p = ModelParams::new(n, theta).map_err(err)?;
    let k: Vec<usize> = p.block_momenta().collect();
    let epsilon = k.iter().map(|&k| dispersion(&p, k as i64)).collect();
    serde_json::to_string(&Spectrum { k, epsilon, e_gs: ground_state_energy(&p) }).map_err(err)
}

/// Local single-site coupling to one bath qubit at frequency `delta`.
fn local_steady(p: &ModelParams, delta: f64, t: f64, g: f64, kappa: f64) -> Result<(kelvin::protocol::SteadyReport, Vec<(f64, f64)>), String> {
    let scheme = CouplingScheme::local(1.0, 1.0, g);
    let sched = make_schedule(&ScheduleDescriptor::Single { delta, t }, p, 0).map_err(err)?;
    let noise = if kappa > 0.0 { NoiseSpec::Depolarizing { kappa } } else { NoiseSpec::None };
    let proto = Protocol { params: p, scheme: &scheme, schedule: &sched, noise, engine: Engine::Cm, dsp: false };
    let rep = steady_report(&proto).map_err(err)?;
    let pred = schedule_predictions(p, &scheme, &sched, kappa).map_err(err)?;
    Ok((rep, pred))
}

pub fn steady_json(n: usize, theta: f64, delta: f64, t: f64, g: f64, kappa: f64) -> Result<String, String> {
    let p = ModelParams::new(n, theta).map_err(err)?;
    let (rep, pred) = local_steady(&p, delta, t, g, kappa)?;
    let out = Steady {
        k: rep.modes.iter().map(|m| m.k).collect(),
        exact: rep.modes.iter().map(|m| m.relative).collect(),
        analytic: pred.iter().map(|x| x.0).collect(),
        alpha: rep.modes.iter().map(|m| m.alpha).collect(),
        e: rep.relative,
        fidelity: rep.fidelity,
    };
    serde_json::to_string(&out).map_err(err)
}

/// Total relative energy across θ ∈ (0, π/2), endpoints excluded.
pub fn theta_scan_json(n: usize, delta: f64, t: f64, g: f64, kappa: f64, points: usize) -> Result<String, String> {
    if points < 2 {
        return Err("need at least two points".into());
    }
    let mut scan = Scan { theta_over_pi: Vec::new(), e: Vec::new() };
    for i in 0..points {
        let x = 0.01 + 0.48 * i as f64 / (points - 1) as f64;
        let p = ModelParams::new(n, x * std::f64::consts::PI).map_err(err)?;
        scan.theta_over_pi.push(x);
        scan.e.push(local_steady(&p, delta, t, g, kappa)?.0.relative);
    }
    serde_json::to_string(&scan).map_err(err)
}

#[wasm_bindgen]
pub fn spectrum(n: usize, theta: f64) -> Result<String, JsValue> {
    spectrum_json(n, theta).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn steady(n: usize, theta: f64, delta: f64, t: f64, g: f64, kappa: f64) -> Result<String, JsValue> {
    steady_json(n, theta, delta, t, g, kappa).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn theta_scan(n: usize, delta: f64, t: f64, g: f64, kappa: f64, points: usize) -> Result<String, JsValue> {
    theta_scan_json(n, delta, t, g, kappa, points).map_err(|e| JsValue::from_str(&e))
}
