//! One grid point of each experiment kind.

use std::collections::BTreeMap;

use qplab::dynamics::{
    arithmetic_phase_test, complex_energy_green_decay, profiles_from_eigen, moment_series, sne_check, time_avg_moment, DynamicsError, EvolutionData,
};
use qplab::greens::{decay_scan, green_solve};
use qplab::lattice::{box_around, HalfPoint, LatticeBox};
use qplab::linalg::c;
use qplab::model::{assemble_restriction, spectrum_bounds, write_matrix_csv, EnergyPoint};
use qplab::msa::{build_stack, StackOptions, Window};
use qplab::ModelSpec;
use serde::Serialize;

use crate::config::{ExperimentConfig, Format};

/// Tolerance shared by the conservation and unitarity checks.
pub const UNITARY_TOLERANCE: f64 = 1e-8;

#[derive(Clone, Debug, Default)]
pub struct PointResult {
    pub pass: bool,
    pub metrics: BTreeMap<String, f64>,
    /// File name (relative to the point directory) and contents.
    pub artifacts: Vec<(String, Vec<u8>)>,
}

impl PointResult {
    fn metric(&mut self, name: &str, value: f64) {
        self.metrics.insert(name.to_string(), value);
    }

    fn artifact(&mut self, name: String, bytes: Vec<u8>) {
        self.artifacts.push((name, bytes));
    }
}

/// Serializes a value as pretty JSON with sorted keys.
pub fn json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let v = serde_json::to_value(value).expect("report serializes");
    let mut out = serde_json::to_vec_pretty(&v).expect("value serializes");
    out.push(b'\n');
    out
}

fn table<F>(format: Format, stem: &str, csv: F, json: impl FnOnce() -> Vec<u8>) -> (String, Vec<u8>)
where
    F: FnOnce(&mut Vec<u8>) -> std::io::Result<()>,
{
    match format {
        Format::Csv => {
            let mut buf = Vec::new();
            csv(&mut buf).expect("writing to memory cannot fail");
            (format!("{stem}.csv"), buf)
        }
        Format::Json => (format!("{stem}.json"), json()),
    }
}

pub fn lattice_box(model: &ModelSpec, radius: i64) -> Result<LatticeBox, String> {
    box_around(&HalfPoint::origin(model.dim), radius as f64).map_err(|e| e.to_string())
}

pub fn assemble(cfg: &ExperimentConfig, model: &ModelSpec, theta: f64, energy: f64, format: Format) -> Result<PointResult, String> {
    let bx = lattice_box(model, cfg.sweep.box_radius)?;
    let r = assemble_restriction(model, &bx, c(theta, 0.0), EnergyPoint::real(energy)).map_err(|e| e.to_string())?;
    let mut out = PointResult::default();
    out.metric("sites", r.len() as f64);
    out.metric("hermitian_defect", r.hermitian_defect);
    let mut pass = r.hermitian;
    if let Ok(sb) = spectrum_bounds(&r) {
        out.metric("spectrum_min", sb.min);
        out.metric("spectrum_max", sb.max);
        out.metric("spectrum_margin", sb.margin);
        pass &= sb.contained;
    }
    if model.epsilon == 0.0 {
        let mut worst = 0.0f64;
        for (i, s) in r.sites.iter().enumerate() {
            let expected = model.potential.value(c(theta + s.dot(&model.frequency.omega), 0.0)) - energy;
            worst = worst.max((r.matrix[(i, i)] - expected).norm());
            for j in 0..r.len() {
                if j != i {
                    worst = worst.max(r.matrix[(i, j)].norm());
                }
            }
        }
        out.metric("diagonal_defect", worst);
        pass &= worst == 0.0;
    }
    let rows: Vec<[String; 4]> = (0..r.len())
        .flat_map(|i| (0..r.len()).map(move |j| (i, j)))
        .map(|(i, j)| [r.sites[i].label(), r.sites[j].label(), r.matrix[(i, j)].re.to_string(), r.matrix[(i, j)].im.to_string()])
        .collect();
    let (name, bytes) = table(format, "matrix", |w| write_matrix_csv(&r, w), || json_bytes(&rows));
    out.artifact(name, bytes);
    out.pass = pass;
    Ok(out)
}

pub fn green(cfg: &ExperimentConfig, model: &ModelSpec, theta: f64, energy: f64, format: Format) -> Result<PointResult, String> {
    let bx = lattice_box(model, cfg.sweep.box_radius)?;
    let point = EnergyPoint { e: c(energy, cfg.sweep.imag_energy), theta0: None };
    let r = assemble_restriction(model, &bx, c(theta, 0.0), point).map_err(|e| e.to_string())?;
    let g = green_solve(&r).map_err(|e| e.to_string())?;
    let rate = cfg.sweep.decay_rate.unwrap_or(0.75 * model.alpha());
    let fit = decay_scan(&g, rate, model.rho(), cfg.sweep.cutoff);
    let mut out = PointResult::default();
    out.metric("sites", g.sites.len() as f64);
    out.metric("norm", g.op_norm);
    out.metric("residual", g.residual);
    out.metric("pairs", fit.pairs.len() as f64);
    out.metric("violations", fit.violations.len() as f64);
    out.metric("worst_ratio", fit.worst_ratio);
    if let Some(a) = fit.alpha_fit {
        out.metric("alpha_fit", a);
    }
    out.pass = fit.passed();
    let (name, bytes) = table(format, "decay", |w| fit.write_csv(w), || json_bytes(&fit));
    out.artifact(name, bytes);
    Ok(out)
}

pub fn msa(cfg: &ExperimentConfig, model: &ModelSpec, schedule: &qplab::msa::ScaleSchedule, theta: f64, energy: f64, format: Format) -> Result<PointResult, String> {
    let opts = StackOptions { s_max: cfg.schedule.s_max, separation: cfg.schedule.separation, ..Default::default() };
    let window = Window::around_origin(model.dim, cfg.sweep.window_radius);
    let stack = build_stack(model, schedule, theta, energy, window, &opts).map_err(|e| e.to_string())?;
    let mut out = PointResult::default();
    let mut pass = stack.trace.steps.iter().all(|s| s.winding_ok);
    out.metric("winding_ok", if pass { 1.0 } else { 0.0 });
    for st in &stack.trace.steps {
        out.metric(&format!("theta{}_shift", st.s), (st.theta - stack.theta0).norm());
    }
    for (s, res) in stack.resonances.iter().enumerate() {
        out.metric(&format!("q{s}_size"), res.q().len() as f64);
    }
    for fam in &stack.blocks {
        out.metric(&format!("case{}", fam.s), if fam.case == qplab::msa::Case::C1 { 1.0 } else { 2.0 });
        out.metric(&format!("separation_violations{}", fam.s), fam.separation_violation_count as f64);
    }
    let (name, bytes) = table(format, "theta_trace", |w| stack.trace.write_csv(w), || json_bytes(&stack.trace));
    out.artifact(name, bytes);
    out.artifact("structures.json".into(), json_bytes(&(&stack.resonances, &stack.blocks)));
    if let (Some(t), true) = (cfg.sweep.green_t, cfg.schedule.s_max >= 1) {
        let rep = complex_energy_green_decay(model, &stack, 1, t, cfg.sweep.probes).map_err(|e| e.to_string())?;
        out.metric("decay_violations", rep.fit.violations.len() as f64);
        out.metric("decay_worst_ratio", rep.fit.worst_ratio);
        out.metric("onset_radius", rep.onset_radius);
        pass &= rep.fit.passed();
        let (name, bytes) = table(format, "decay", |w| rep.fit.write_csv(w), || json_bytes(&rep.fit));
        out.artifact(name, bytes);
        out.artifact("neighborhoods.json".into(), json_bytes(&rep.neighborhoods));
    }
    out.pass = pass;
    Ok(out)
}

pub fn dynamics(cfg: &ExperimentConfig, model: &ModelSpec, data: &EvolutionData, p: f64, format: Format) -> Result<PointResult, String> {
    let err = |e: DynamicsError| e.to_string();
    let psi0 = data.delta(data.initial);
    let series = moment_series(data, &psi0, p, &cfg.sweep.times).map_err(err)?;
    let mut out = PointResult::default();
    let max_defect = series.conservation_defect.iter().copied().fold(0.0, f64::max);
    out.metric("unitarity_defect", data.unitarity_defect);
    out.metric("reconstruction_defect", data.reconstruction_defect);
    out.metric("conservation_defect", max_defect);
    out.metric("boundary_mass", series.max_boundary_mass());
    let mut pass = max_defect <= UNITARY_TOLERANCE && data.unitarity_defect <= UNITARY_TOLERANCE;
    let (name, bytes) = table(format, "moments", |w| series.write_csv(w), || json_bytes(&series));
    out.artifact(name, bytes);

    let mut averages = Vec::new();
    for &horizon in &cfg.sweep.horizons {
        match time_avg_moment(data, &psi0, p, horizon, cfg.sweep.laguerre_nodes) {
            Ok(avg) => averages.push(avg),
            Err(e) => {
                pass = false;
                out.metric(&format!("time_average_error_T{horizon}"), 1.0);
                out.artifact(format!("time_average_T{horizon}.err"), e.to_string().into_bytes());
            }
        }
    }
    let mut buf = b"horizon,quadrature,spectral,relative_difference\n".to_vec();
    for a in &averages {
        buf.extend(format!("{},{},{},{}\n", a.horizon_t, a.quadrature, a.spectral, a.relative_difference).bytes());
    }
    let (name, bytes) = match format {
        Format::Csv => ("time_averages.csv".to_string(), buf),
        Format::Json => ("time_averages.json".to_string(), json_bytes(&averages)),
    };
    out.artifact(name, bytes);

    let sne_times: Vec<f64> = cfg.sweep.times.iter().copied().filter(|&t| t >= 1.0).collect();
    if !sne_times.is_empty() {
        let sne = sne_check(data, p, &sne_times, model.rho_prime).map_err(err)?;
        out.metric("sne_exceeded", sne.exceeded.len() as f64);
        out.metric("sne_gate_ok", if sne.gate_ok { 1.0 } else { 0.0 });
        if cfg.sweep.assert_sne {
            pass &= sne.below_bound() && sne.gate_ok;
        }
        let mut buf = b"t,value,bound,boundary_mass\n".to_vec();
        for i in 0..sne.times.len() {
            buf.extend(format!("{},{},{},{}\n", sne.times[i], sne.values[i], sne.bounds[i], sne.boundary_mass[i]).bytes());
        }
        let (name, bytes) = match format {
            Format::Csv => ("sne.csv".to_string(), buf),
            Format::Json => ("sne.json".to_string(), json_bytes(&sne)),
        };
        out.artifact(name, bytes);
    }
    out.pass = pass;
    Ok(out)
}

pub fn localize(cfg: &ExperimentConfig, model: &ModelSpec, data: &EvolutionData, theta: f64, format: Format) -> Result<PointResult, String> {
    let summary = profiles_from_eigen(&data.eigenvalues, &data.eigenvectors, &data.sites, model.rho(), cfg.sweep.target_fraction * model.alpha());
    let evidence = arithmetic_phase_test(theta, &model.frequency.omega, cfg.sweep.phase_tau, cfg.sweep.phase_n_max).map_err(|e| e.to_string())?;
    let mut out = PointResult::default();
    let worst_norm = summary.profiles.iter().map(|p| p.norm_defect).fold(0.0, f64::max);
    out.metric("norm_defect", worst_norm);
    out.metric("fraction_localized", summary.fraction_localized);
    out.metric("median_participation", summary.median_participation);
    if let Some(m) = summary.median_c {
        out.metric("median_c", m);
    }
    out.metric("phase_violations", evidence.violation_count as f64);
    if let Some(v) = &evidence.largest_violator {
        out.metric("phase_largest_violator_norm", v.n.norm() as f64);
    }
    out.pass = worst_norm <= UNITARY_TOLERANCE;
    let (name, bytes) = table(format, "profiles", |w| summary.write_csv(w), || json_bytes(&summary));
    out.artifact(name, bytes);
    out.artifact("phase_evidence.json".into(), json_bytes(&evidence));
    Ok(out)
}

/// Hamiltonian on the configured box at `θ`.
pub fn hamiltonian(model: &ModelSpec, bx: &LatticeBox, theta: f64) -> Result<qplab::CMat, String> {
    let r = assemble_restriction(model, bx, c(theta, 0.0), EnergyPoint::real(0.0)).map_err(|e| e.to_string())?;
    if !r.hermitian {
        return Err(format!("restriction is not Hermitian (defect {:e})", r.hermitian_defect));
    }
    Ok(r.hamiltonian())
}
