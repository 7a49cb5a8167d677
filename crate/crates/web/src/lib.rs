//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Three entry points: the spectrum of a box restriction, the spreading of a
//! packet started at the origin, and the resonant sites at the first two scales.
//! Each returns plain numbers or a JSON string so the page needs no glue beyond
//! the generated module.

use qplab::dynamics::{log_grid, sne_check, EvolutionData};
use qplab::lattice::{box_around, HalfPoint, Site};
use qplab::linalg::{c, hermitian_eigen, CMat};
use qplab::model::{assemble_restriction, EnergyPoint, ModelSpec};
use qplab::msa::{build_schedule, build_stack, DeskOverrides, ScheduleSpec, SeparationPolicy, StackOptions, Window};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Boxes larger than this make the page unresponsive.
const MAX_RADIUS: u32 = 200;

fn restriction(epsilon: f64, theta: f64, radius: u32) -> Result<(CMat, Vec<Site>), String> {
    if radius > MAX_RADIUS {
        return Err(format!("radius {radius} exceeds {MAX_RADIUS}"));
    }
    let model = ModelSpec::golden_cosine(epsilon);
    let bx = box_around(&HalfPoint::origin(1), radius as f64).map_err(|e| e.to_string())?;
    let r = assemble_restriction(&model, &bx, c(theta, 0.0), EnergyPoint::real(0.0)).map_err(|e| e.to_string())?;
    Ok((r.hamiltonian(), bx.sites))
}

/// Sorted eigenvalues of the operator on `[-radius, radius]`.
pub fn spectrum_native(epsilon: f64, theta: f64, radius: u32) -> Result<Vec<f64>, String> {
    let (h, _) = restriction(epsilon, theta, radius)?;
    let (mut values, _) = hermitian_eigen(&h);
    values.sort_by(f64::total_cmp);
    Ok(values)
}

#[derive(Serialize)]
pub struct Spreading {
    pub times: Vec<f64>,
    pub moments: Vec<f64>,
    pub bounds: Vec<f64>,
    pub boundary_mass: Vec<f64>,
}

pub fn spreading_native(epsilon: f64, theta: f64, radius: u32, p: f64, t_max: f64, samples: usize) -> Result<Spreading, String> {
    if !(t_max > 0.1) || samples < 2 {
        return Err("need t_max > 0.1 and at least two samples".into());
    }
    let (h, sites) = restriction(epsilon, theta, radius)?;
    let data = EvolutionData::new(&h, sites).map_err(|e| e.to_string())?;
    let times = log_grid(0.1, t_max, samples);
    let rep = sne_check(&data, p, &times, ModelSpec::golden_cosine(epsilon).rho_prime).map_err(|e| e.to_string())?;
    Ok(Spreading { times: rep.times, moments: rep.values, bounds: rep.bounds, boundary_mass: rep.boundary_mass })
}

#[derive(Serialize)]
pub struct Resonances {
    pub theta0: [f64; 2],
    pub scales: Vec<ScaleSites>,
}

#[derive(Serialize)]
pub struct ScaleSites {
    pub scale: usize,
    pub log_delta: f64,
    /// Twice the coordinate, so half-integer points stay integral.
    pub doubled_sites: Vec<i64>,
    pub case: Option<String>,
}

pub fn resonances_native(epsilon: f64, delta0: f64, theta: f64, energy: f64, radius: u32) -> Result<Resonances, String> {
    if radius > 4 * MAX_RADIUS {
        return Err(format!("radius {radius} exceeds {}", 4 * MAX_RADIUS));
    }
    let model = ModelSpec::golden_cosine(epsilon);
    let spec = ScheduleSpec::desk(delta0.ln(), model.rho_prime, model.alpha(), model.rho(), 1, DeskOverrides::default());
    let schedule = build_schedule(&spec).map_err(|e| e.to_string())?;
    let opts = StackOptions { s_max: 1, separation: SeparationPolicy::Report, ..Default::default() };
    let stack = build_stack(&model, &schedule, theta, energy, Window::around_origin(1, radius as i64), &opts).map_err(|e| e.to_string())?;
    let scales = stack
        .resonances
        .iter()
        .map(|r| ScaleSites {
            scale: r.s,
            log_delta: r.log_delta,
            doubled_sites: r.q().iter().map(|k| k.twice()[0]).collect(),
            case: r.classification.as_ref().map(|c| format!("{:?}", c.case)),
        })
        .collect();
    Ok(Resonances { theta0: [stack.theta0.re, stack.theta0.im], scales })
}

#[wasm_bindgen]
pub fn spectrum(epsilon: f64, theta: f64, radius: u32) -> Result<Vec<f64>, JsError> {
    spectrum_native(epsilon, theta, radius).map_err(|e| JsError::new(&e))
}

/// JSON object with `times`, `moments`, `bounds` and `boundary_mass`.
#[wasm_bindgen]
pub fn spreading(epsilon: f64, theta: f64, radius: u32, p: f64, t_max: f64, samples: usize) -> Result<String, JsError> {
    let s = spreading_native(epsilon, theta, radius, p, t_max, samples).map_err(|e| JsError::new(&e))?;
    serde_json::to_string(&s).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub fn resonances(epsilon: f64, delta0: f64, theta: f64, energy: f64, radius: u32) -> Result<String, JsError> {
    let r = resonances_native(epsilon, delta0, theta, energy, radius).map_err(|e| JsError::new(&e))?;
    serde_json::to_string(&r).map_err(|e| JsError::new(&e.to_string()))
}
