//! Moment bounds through Green's functions at complex energy, decay of the
//! Green's function just off the real axis, and the sub-polynomial moment bound.

use serde::Serialize;

use super::evolution::{evolve_amplitudes, moment_series, EvolutionData};
use super::DynamicsError;
use crate::greens::{green_solve, DecayFit, DecayPair};
use crate::lattice::{box_around, log_rho, regular_deformation, HalfPoint, Site, SiteSet, DEFORMATION_SWEEP_CAP};
use crate::linalg::{c, CMat, C64};
use crate::model::{assemble_on_sites, EnergyPoint, ModelSpec, PotentialSpec};
use crate::msa::MsaStack;

/// Spectral margins `[a, b]` and `β` of the potential.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Margins {
    pub a: f64,
    pub b: f64,
    pub beta: f64,
}

impl Margins {
    pub fn from_potential(p: &PotentialSpec) -> Self {
        Margins { a: p.a, b: p.b, beta: p.beta }
    }

    /// Integration range `[a − 2β, b + 2β]`.
    pub fn contour(&self) -> (f64, f64) {
        (self.a - 2.0 * self.beta, self.b + 2.0 * self.beta)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct QuadratureOptions {
    pub initial_panels: usize,
    pub rel_tol: f64,
    pub max_solves: usize,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        QuadratureOptions { initial_panels: 64, rel_tol: 1e-4, max_solves: 2048 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Quadrature {
    pub value: f64,
    pub evaluations: usize,
    pub budget_hit: bool,
}

struct Panel {
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: usize,
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

/// Adaptive Simpson rule on `[lo, hi]` with a cap on integrand evaluations.
///
/// Panels still unresolved when the budget runs out keep their current
/// Richardson-corrected estimate and set `budget_hit`.
pub fn adaptive_simpson<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, opts: &QuadratureOptions) -> Quadrature {
    let n = opts.initial_panels.max(1);
    let h = (hi - lo) / n as f64;
    let grid: Vec<f64> = (0..=2 * n).map(|i| f(lo + 0.5 * h * i as f64)).collect();
    let mut evaluations = grid.len();
    let coarse: f64 = (0..n).map(|i| simpson(lo + h * i as f64, lo + h * (i + 1) as f64, grid[2 * i], grid[2 * i + 1], grid[2 * i + 2])).sum();
    let total_tol = opts.rel_tol * coarse.abs().max(f64::MIN_POSITIVE);
    let mut stack: Vec<Panel> = (0..n)
        .rev()
        .map(|i| {
            let (a, b) = (lo + h * i as f64, lo + h * (i + 1) as f64);
            Panel { a, b, fa: grid[2 * i], fm: grid[2 * i + 1], fb: grid[2 * i + 2], whole: simpson(a, b, grid[2 * i], grid[2 * i + 1], grid[2 * i + 2]), tol: total_tol / n as f64, depth: 0 }
        })
        .collect();
    let mut value = 0.0;
    let mut budget_hit = false;
    while let Some(p) = stack.pop() {
        if evaluations + 2 > opts.max_solves {
            budget_hit = true;
            value += p.whole;
            continue;
        }
        let m = 0.5 * (p.a + p.b);
        let (lm, rm) = (0.5 * (p.a + m), 0.5 * (m + p.b));
        let (flm, frm) = (f(lm), f(rm));
        evaluations += 2;
        let left = simpson(p.a, m, p.fa, flm, p.fm);
        let right = simpson(m, p.b, p.fm, frm, p.fb);
        let diff = left + right - p.whole;
        if diff.abs() <= 15.0 * p.tol || p.depth >= 40 {
            value += left + right + diff / 15.0;
        } else {
            stack.push(Panel { a: m, b: p.b, fa: p.fm, fm: frm, fb: p.fb, whole: right, tol: 0.5 * p.tol, depth: p.depth + 1 });
            stack.push(Panel { a: p.a, b: m, fa: p.fa, fm: flm, fb: p.fm, whole: left, tol: 0.5 * p.tol, depth: p.depth + 1 });
        }
    }
    Quadrature { value, evaluations, budget_hit }
}

/// `G(z)(x, ·)` as a row, from one linear solve `(H − z)ᵀ y = e_x`.
pub fn green_row(h: &CMat, x: usize, z: C64) -> Result<Vec<C64>, DynamicsError> {
    let n = h.nrows();
    let mut a = h.transpose();
    for i in 0..n {
        a[(i, i)] -= z;
    }
    let mut e = nalgebra::DVector::from_element(n, c(0.0, 0.0));
    e[x] = c(1.0, 0.0);
    let y = a.lu().solve(&e).ok_or_else(|| DynamicsError::InvalidInput(format!("H − z is singular at z = {z}")))?;
    Ok(y.iter().copied().collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BoundCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct MomentGreenReport {
    pub n: Site,
    pub t: f64,
    /// `∫_{a−2β}^{b+2β} |G(E + i/t)(0,n)|² dE`.
    pub integral: Quadrature,
    pub remainder_decay: f64,
    /// `|amp(n,t)|²` against its contour bound.
    pub instant: BoundCheck,
    /// `(2/T)∫₀^∞ e^{−2s/T}|amp(n,s)|² ds` with `T = t`.
    pub averaged: BoundCheck,
}

/// Checks both moment/Green inequalities at site index `target`, with `T = t`.
///
/// The initial vector is `δ` at `data.initial`; `alpha` and `rho` set the
/// remainder `e^{−(9/5)α log^ρ(1+‖n‖)}`.
pub fn moment_green_bound(
    data: &EvolutionData,
    h: &CMat,
    target: usize,
    t: f64,
    margins: Margins,
    alpha: f64,
    rho: f64,
    opts: &QuadratureOptions,
) -> Result<MomentGreenReport, DynamicsError> {
    if !(t > 0.0) || target >= data.len() {
        return Err(DynamicsError::InvalidInput("need t > 0 and a site inside the box".into()));
    }
    let (lo, hi) = (margins.a - margins.beta, margins.b + margins.beta);
    if let Some(&e) = data.eigenvalues.iter().find(|&&e| e < lo - 1e-12 || e > hi + 1e-12) {
        return Err(DynamicsError::SpectrumEscapes { eigenvalue: e, lo, hi });
    }
    let origin = data.initial;
    let psi0 = data.delta(origin);
    let amp = evolve_amplitudes(data, &psi0, &[t])?;
    let instant_lhs = amp.amps[0][target].norm_sqr();

    let u = &data.eigenvectors;
    let k = data.len();
    let mut averaged_lhs = c(0.0, 0.0);
    for j in 0..k {
        for l in 0..k {
            let kernel = c(1.0, (data.eigenvalues[j] - data.eigenvalues[l]) * t / 2.0).inv();
            averaged_lhs += u[(target, j)] * u[(target, l)].conj() * u[(origin, j)].conj() * u[(origin, l)] * kernel;
        }
    }

    let (ea, eb) = margins.contour();
    let mut failure = None;
    let integral = adaptive_simpson(
        |e| match green_row(h, origin, c(e, 1.0 / t)) {
            Ok(row) => row[target].norm_sqr(),
            Err(err) => {
                failure.get_or_insert(err);
                0.0
            }
        },
        ea,
        eb,
        opts,
    );
    if let Some(err) = failure {
        return Err(err);
    }
    let dist = data.sites[target].dist(&data.sites[origin]) as f64;
    let remainder_decay = (-(9.0 / 5.0) * alpha * log_rho(dist, rho)).exp();
    let (beta, len) = (margins.beta, margins.b - margins.a);
    let e2 = std::f64::consts::E.powi(2);
    let pi2 = std::f64::consts::PI.powi(2);
    let instant_rhs = (len + 4.0 * beta) * e2 / (2.0 * pi2) * integral.value
        + 2.0 * e2 / (beta * beta * pi2) * (len + 6.0 * beta + 2.0 / t).powi(2) * remainder_decay;
    let averaged_rhs = integral.value / (t * std::f64::consts::PI) + 4.0 / (beta * t * std::f64::consts::PI) * remainder_decay;
    Ok(MomentGreenReport {
        n: data.sites[target].clone(),
        t,
        integral,
        remainder_decay,
        instant: BoundCheck { lhs: instant_lhs, rhs: instant_rhs, pass: instant_lhs <= instant_rhs },
        averaged: BoundCheck { lhs: averaged_lhs.re, rhs: averaged_rhs, pass: averaged_lhs.re <= averaged_rhs },
    })
}

/// Regular neighborhood `O_n` grown from `Λ_{‖n‖/5}(n)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NeighborhoodSample {
    pub n: Site,
    pub base_sites: usize,
    pub sites: Option<usize>,
    pub realized_pad: Option<i64>,
    pub contains_origin: Option<bool>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct GreenDecayReport {
    pub s: usize,
    pub t: f64,
    /// Admissible range `[δ_s³, min(δ_{s−1}³, β))` of `t⁻¹`.
    pub bracket: (f64, f64),
    pub onset_radius: f64,
    pub fit: DecayFit,
    /// `max |G(0,n)|` over the outer shell of the window.
    pub boundary_max: f64,
    pub neighborhoods: Vec<NeighborhoodSample>,
}

/// `e^{(log t)^{2/(1+ρ')}}`.
pub fn onset_radius(t: f64, rho_prime: f64) -> f64 {
    t.ln().max(0.0).powf(2.0 / (1.0 + rho_prime)).exp()
}

/// Checks `|T⁻¹(E + i/t; θ)(0,n)| < e^{−(3/4)α_s log^ρ(1+‖n‖)}` beyond the onset
/// radius on the stack's window, and samples `probes` regular neighborhoods.
pub fn complex_energy_green_decay(model: &ModelSpec, stack: &MsaStack, s: usize, t: f64, probes: usize) -> Result<GreenDecayReport, DynamicsError> {
    if s == 0 || s >= stack.resonances.len() {
        return Err(DynamicsError::InvalidInput(format!("scale {s} is not available in the stack")));
    }
    let sched = &stack.schedule;
    let lower = (3.0 * sched.log_delta(s)).exp();
    let upper = (3.0 * sched.log_delta(s - 1)).exp().min(model.potential.beta);
    let inv_t = 1.0 / t;
    if !(t > 0.0) || !(lower <= inv_t && inv_t < upper) {
        return Err(DynamicsError::BracketViolated { inv_t, lower, upper });
    }
    let window = &stack.window;
    let bx = box_around(&HalfPoint::from_site(&window.center), window.radius as f64)?;
    let energy = EnergyPoint { e: c(stack.energy, inv_t), theta0: None };
    let r = assemble_on_sites(model, &bx.sites, c(stack.theta, 0.0), energy)?;
    let g = green_solve(&r)?;
    let origin_site = Site::origin(model.dim);
    let origin = bx.index_of(&origin_site).ok_or_else(|| DynamicsError::InvalidInput("window does not contain the origin".into()))?;

    let onset = onset_radius(t, sched.rho_prime);
    let rate = 0.75 * sched.scale(s).alpha;
    let rho = model.rho();
    let shell = window.radius - (window.radius / 10).max(1);
    let mut pairs = Vec::new();
    let mut boundary_max = 0.0f64;
    for (j, y) in bx.sites.iter().enumerate() {
        let modulus = g.inverse[(origin, j)].norm();
        if y.dist(&window.center) > shell {
            boundary_max = boundary_max.max(modulus);
        }
        let dist = y.norm();
        if dist == 0 || (dist as f64) < onset {
            continue;
        }
        let bound = (-rate * log_rho(dist as f64, rho)).exp();
        pairs.push(DecayPair { x: origin_site.clone(), y: y.clone(), dist, modulus, bound, pass: modulus < bound });
    }
    let fit = DecayFit::from_pairs(pairs, rate, rho, onset);

    let scales: Vec<Vec<SiteSet>> = stack.blocks.iter().take(s).map(|f| f.omega_tilde.clone()).collect();
    let mut neighborhoods = Vec::new();
    let stride = (fit.pairs.len() / probes.max(1)).max(1);
    for p in fit.pairs.iter().step_by(stride).take(probes) {
        let n = &p.y;
        let base = match box_around(&HalfPoint::from_site(n), (n.norm() / 5) as f64) {
            Ok(b) => b.to_set(),
            Err(e) => {
                neighborhoods.push(NeighborhoodSample { n: n.clone(), base_sites: 0, sites: None, realized_pad: None, contains_origin: None, error: Some(e.to_string()) });
                continue;
            }
        };
        let sample = match regular_deformation(&base, &scales, 0, DEFORMATION_SWEEP_CAP) {
            Ok(d) => NeighborhoodSample {
                n: n.clone(),
                base_sites: base.len(),
                sites: Some(d.set.len()),
                realized_pad: Some(d.realized_pad),
                contains_origin: Some(d.set.contains(&origin_site)),
                error: None,
            },
            Err(e) => NeighborhoodSample { n: n.clone(), base_sites: base.len(), sites: None, realized_pad: None, contains_origin: None, error: Some(e.to_string()) },
        };
        neighborhoods.push(sample);
    }
    Ok(GreenDecayReport { s, t, bracket: (lower, upper), onset_radius: onset, fit, boundary_max, neighborhoods })
}

/// `2^p e^{p (log t)^{2/(1+ρ')}}`.
pub fn sne_bound(p: f64, t: f64, rho_prime: f64) -> f64 {
    (p * std::f64::consts::LN_2 + p * t.ln().max(0.0).powf(2.0 / (1.0 + rho_prime))).exp()
}

/// `T₀ = max(1/β, δ₀⁻³)`.
pub fn sne_start_time(beta: f64, log_delta0: f64) -> f64 {
    (1.0 / beta).max((-3.0 * log_delta0).exp())
}

#[derive(Clone, Debug, Serialize)]
pub struct SneReport {
    pub p: f64,
    pub rho_prime: f64,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub bounds: Vec<f64>,
    pub boundary_mass: Vec<f64>,
    /// Indices of times where the moment exceeds the bound.
    pub exceeded: Vec<usize>,
    /// Boundary mass stayed below the truncation gate at every time.
    pub gate_ok: bool,
}

impl SneReport {
    pub fn below_bound(&self) -> bool {
        self.exceeded.is_empty()
    }
}

/// Samples the `p`-th moment from `δ` at the initial site and compares it with [`sne_bound`].
pub fn sne_check(data: &EvolutionData, p: f64, times: &[f64], rho_prime: f64) -> Result<SneReport, DynamicsError> {
    let psi0 = data.delta(data.initial);
    let series = moment_series(data, &psi0, p, times)?;
    let bounds: Vec<f64> = times.iter().map(|&t| sne_bound(p, t, rho_prime)).collect();
    let exceeded = series.values.iter().zip(&bounds).enumerate().filter(|(_, (v, b))| v > b).map(|(i, _)| i).collect();
    let gate_ok = series.max_boundary_mass() < super::evolution::BOUNDARY_MASS_WARNING;
    Ok(SneReport { p, rho_prime, times: times.to_vec(), values: series.values, bounds, boundary_mass: series.boundary_mass, exceeded, gate_ok })
}

/// `n` points log-spaced on `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n <= 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
}
