//! Tracking `θ_s` as a zero of `det S_s(z)`, the Schur complement of the
//! translated block operator on its singular core.
//!
//! Roots come from damped Newton iterations started across a disc; the count
//! is validated by the winding number of `det S_s` along the disc boundary.

use std::io::{self, Write};

use serde::Serialize;

use super::MsaError;
use crate::greens::{self, GreenError};
use crate::lattice::HalfPoint;
use crate::linalg::{self, c, CMat, C64};
use crate::model::{hopping_weight, torus_norm, ModelSpec};

/// `M_s(z) = (v(z + x·ω) − E)δ + εW` on a translated block `Ω̃ − k`.
#[derive(Clone, Debug)]
pub struct BlockOperator<'a> {
    model: &'a ModelSpec,
    phases: Vec<f64>,
    hopping: CMat,
    core_idx: Vec<usize>,
    rest_idx: Vec<usize>,
    energy: C64,
}

impl<'a> BlockOperator<'a> {
    /// `shape` is `Ω̃ − k`, `core` is `A − k ⊂ shape`.
    pub fn new(model: &'a ModelSpec, shape: &[HalfPoint], core: &[HalfPoint], energy: C64) -> Result<Self, MsaError> {
        let n = shape.len();
        if n > model.dense_cap {
            return Err(MsaError::Model(crate::model::ModelError::BoxTooLarge { sites: n, cap: model.dense_cap }));
        }
        let phases = shape.iter().map(|x| x.dot(&model.frequency.omega)).collect();
        let mut hopping = CMat::zeros(n, n);
        if model.epsilon != 0.0 {
            for i in 0..n {
                for j in 0..n {
                    if i != j {
                        let diff = shape[i].sub(&shape[j]).to_site().ok_or_else(|| MsaError::InvalidSchedule("block shape mixes cosets".into()))?;
                        hopping[(i, j)] = hopping_weight(&model.hopping, &diff.0)? * model.epsilon;
                    }
                }
            }
        }
        let mut core_idx = Vec::new();
        let mut rest_idx = Vec::new();
        for (i, x) in shape.iter().enumerate() {
            if core.contains(x) {
                core_idx.push(i);
            } else {
                rest_idx.push(i);
            }
        }
        if core_idx.len() != core.len() {
            return Err(MsaError::InvalidSchedule("singular core is not contained in the block".into()));
        }
        Ok(BlockOperator { model, phases, hopping, core_idx, rest_idx, energy })
    }

    pub fn matrix(&self, z: C64) -> CMat {
        let mut m = self.hopping.clone();
        for (i, p) in self.phases.iter().enumerate() {
            m[(i, i)] = self.model.potential.value(z + p) - self.energy;
        }
        m
    }

    /// Phases `x·ω` of the sites outside the core.
    pub fn rest_phases(&self) -> Vec<f64> {
        self.rest_idx.iter().map(|&i| self.phases[i]).collect()
    }

    pub fn schur(&self, z: C64) -> Result<CMat, GreenError> {
        let m = self.matrix(z);
        if self.rest_idx.is_empty() {
            return Ok(linalg::submatrix(&m, &self.core_idx, &self.core_idx));
        }
        greens::schur_only(&m, &self.rest_idx, &self.core_idx)
    }

    /// `det M_s(z)`, an entire function of `z`.
    pub fn det_full(&self, z: C64) -> C64 {
        linalg::determinant(&self.matrix(z))
    }

    /// `det` of the block outside the core; its zeros are the poles of `S_s`.
    pub fn det_rest(&self, z: C64) -> C64 {
        linalg::determinant(&linalg::submatrix(&self.matrix(z), &self.rest_idx, &self.rest_idx))
    }

    /// Unperturbed poles `±θ₀ − x·ω` of `S_s` inside the disc.
    fn rest_pole_distances(&self, center: C64, theta0: C64) -> Vec<f64> {
        let mut out = Vec::new();
        for p in &self.rest_phases() {
            for sigma in [1.0, -1.0] {
                out.push(torus_norm(center - (theta0 * sigma - p)));
            }
        }
        out
    }

    /// `det S_s(z)`; `None` where the complement block is singular.
    pub fn det(&self, z: C64) -> Option<C64> {
        self.schur(z).ok().map(|s| linalg::determinant(&s)).filter(|d| d.re.is_finite() && d.im.is_finite())
    }
}

/// Disc searched for roots.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RootWindow {
    pub center: C64,
    pub radius: f64,
    /// Number of roots the disc should hold: 1 around a simple root, 2 when
    /// `θ` and `−θ` share the disc.
    pub expected: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ThetaOptions {
    /// Relative Newton tolerance against the boundary median of `|det S|`.
    pub newton_tolerance: f64,
    pub boundary_samples: usize,
    pub refine_depth: usize,
    pub newton_iterations: usize,
}

impl Default for ThetaOptions {
    fn default() -> Self {
        ThetaOptions { newton_tolerance: 1e-12, boundary_samples: 128, refine_depth: 12, newton_iterations: 40 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ThetaStep {
    pub s: usize,
    pub theta: C64,
    /// `|det S_s(θ_s)|`.
    pub residual: f64,
    pub tolerance: f64,
    pub window: RootWindow,
    /// Argument-principle count of zeros minus poles of `det S_s` in the window.
    pub winding: i64,
    /// Poles of `S_s` inside the window, counted by the winding of `det` on
    /// the complement block. Zero unless the pole-free window failed.
    pub poles: usize,
    pub roots: Vec<C64>,
    pub winding_ok: bool,
    /// `|det S_s(−θ_s)|` relative to the boundary median.
    pub pairing_residual: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ThetaTrace {
    pub steps: Vec<ThetaStep>,
}

impl ThetaTrace {
    pub fn thetas(&self) -> Vec<C64> {
        self.steps.iter().map(|s| s.theta).collect()
    }

    /// Writes `s,re_theta,im_theta,residual,winding_ok` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "s,re_theta,im_theta,residual,winding_ok")?;
        for st in &self.steps {
            writeln!(w, "{},{},{},{},{}", st.s, st.theta.re, st.theta.im, st.residual, st.winding_ok)?;
        }
        Ok(())
    }
}

/// Root window for scale `s` following `θ_{s−1}`.
///
/// The radius is `δ_{s−1}^w`, clipped to half the distance from the center to
/// the nearest unperturbed pole `±θ₀ − x·ω` (`x` outside the core) and to the
/// analyticity strip. The disc is centered at the (C2) candidate when there
/// is one, else at `θ_{s−1}`. When that point lies well inside the clipped
/// disc around the nearest of `0` and `1/2`, the disc around the half-integer
/// is used instead and holds the pair `±θ_s`.
pub fn root_window(op: &BlockOperator<'_>, prev: C64, theta0: C64, log_delta_prev: f64, exponent: f64, candidate: Option<C64>) -> RootWindow {
    let base = (exponent * log_delta_prev).exp().min(0.25);
    let point = candidate.unwrap_or(prev);
    let pair = c((2.0 * point.re).round() / 2.0, 0.0);
    let pair_radius = clipped_radius(op, pair, theta0, base);
    if (point - pair).norm() < 0.5 * pair_radius {
        return RootWindow { center: pair, radius: pair_radius, expected: 2 };
    }
    RootWindow { center: point, radius: clipped_radius(op, point, theta0, base), expected: 1 }
}

fn clipped_radius(op: &BlockOperator<'_>, center: C64, theta0: C64, base: f64) -> f64 {
    let mut gap = f64::INFINITY;
    for p in op.rest_phases() {
        for sigma in [1.0, -1.0] {
            gap = gap.min(torus_norm(center - (theta0 * sigma - p)));
        }
    }
    let strip = op.model.potential.strip - center.im.abs();
    base.min(0.5 * gap).min(0.5 * strip)
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    if xs.is_empty() {
        return 0.0;
    }
    xs[xs.len() / 2]
}

/// Winding number of `f` along the circle, refining segments whose phase jumps by `π/2` or more.
fn winding_number(f: &dyn Fn(C64) -> Option<C64>, w: &RootWindow, samples: usize, depth: usize) -> Result<(i64, Vec<f64>), MsaError> {
    let point = |t: f64| w.center + C64::from_polar(w.radius, t);
    let tau = std::f64::consts::TAU;
    let mut total = 0.0;
    let mut moduli = Vec::with_capacity(samples);
    let eval = |t: f64| f(point(t)).ok_or(MsaError::PoleOnContour { s: 0, at: point(t) });
    let mut prev_t = 0.0;
    let mut prev_v = eval(0.0)?;
    moduli.push(prev_v.norm());
    for j in 1..=samples {
        let t = tau * j as f64 / samples as f64;
        let v = if j == samples { eval(0.0)? } else { eval(t)? };
        total += segment_phase(&eval, prev_t, t, prev_v, v, depth)?;
        if j < samples {
            moduli.push(v.norm());
        }
        prev_t = t;
        prev_v = v;
    }
    Ok(((total / tau).round() as i64, moduli))
}

fn segment_phase(eval: &dyn Fn(f64) -> Result<C64, MsaError>, t0: f64, t1: f64, v0: C64, v1: C64, depth: usize) -> Result<f64, MsaError> {
    let step = (v1 / v0).arg();
    if step.abs() < std::f64::consts::FRAC_PI_2 || depth == 0 {
        return Ok(step);
    }
    let tm = 0.5 * (t0 + t1);
    let vm = eval(tm)?;
    Ok(segment_phase(eval, t0, tm, v0, vm, depth - 1)? + segment_phase(eval, tm, t1, vm, v1, depth - 1)?)
}

/// `|det S|` at or below this multiple of the boundary median is accepted
/// once Newton stops making progress, which happens at the rounding floor of
/// large determinants.
pub const STAGNATION_ACCEPT: f64 = 1e-6;

fn newton(f: &dyn Fn(C64) -> Option<C64>, start: C64, w: &RootWindow, tol: f64, loose: f64, iterations: usize) -> Option<(C64, f64)> {
    let h = (1e-5 * w.radius).max(1e-9);
    let mut z = start;
    let mut fz = f(z)?;
    for _ in 0..iterations {
        if fz.norm() <= tol {
            break;
        }
        let df = (f(z + h)? - f(z - h)?) / (2.0 * h);
        if df.norm() == 0.0 || !df.re.is_finite() {
            return None;
        }
        let step = fz / df;
        let mut lambda = 1.0;
        let mut accepted = None;
        for _ in 0..30 {
            let cand = z - step * lambda;
            if (cand - w.center).norm() <= 1.5 * w.radius {
                if let Some(fc) = f(cand) {
                    if fc.norm() < fz.norm() {
                        accepted = Some((cand, fc));
                        break;
                    }
                }
            }
            lambda *= 0.5;
        }
        let Some((zn, fn_)) = accepted else { break };
        let moved = (zn - z).norm();
        z = zn;
        fz = fn_;
        if moved <= 1e-15 * z.norm().max(1.0) {
            break;
        }
    }
    (fz.norm() <= tol.max(loose)).then_some((z, fz.norm()))
}

fn newton_starts(window: &RootWindow, grid_n: usize) -> (Vec<C64>, Vec<C64>) {
    let mut ring = Vec::new();
    for r in [0.3, 0.7] {
        for j in 0..8 {
            ring.push(window.center + C64::from_polar(r * window.radius, std::f64::consts::TAU * (j as f64 + 0.5 * r) / 8.0));
        }
    }
    let mut grid = Vec::new();
    let h = 2.0 / grid_n as f64;
    for a in 0..grid_n {
        for b in 0..grid_n {
            let z = window.center + c((a as f64 + 0.5) * h - 1.0, (b as f64 + 0.5) * h - 1.0) * window.radius;
            if (z - window.center).norm() < window.radius {
                grid.push(z);
            }
        }
    }
    (ring, grid)
}

/// Distinct Newton roots of `f` strictly inside `window`, widening the set of
/// starting points until `wanted` roots are found.
#[allow(clippy::too_many_arguments)]
fn collect_roots(f: &dyn Fn(C64) -> Option<C64>, window: &RootWindow, preferred: C64, wanted: i64, tol: f64, loose: f64, iterations: usize, grid_n: usize) -> Vec<(C64, f64)> {
    let (ring, grid) = newton_starts(window, grid_n);
    let mut roots: Vec<(C64, f64)> = Vec::new();
    for starts in [vec![preferred, window.center], ring, grid] {
        if !roots.is_empty() && roots.len() as i64 >= wanted {
            break;
        }
        for z0 in starts {
            let Some((z, r)) = newton(f, z0, window, tol, loose, iterations) else { continue };
            if (z - window.center).norm() >= window.radius {
                continue;
            }
            match roots.iter_mut().find(|(q, _)| (*q - z).norm() <= 1e-7 * window.radius) {
                Some(slot) if r < slot.1 => *slot = (z, r),
                Some(_) => {}
                None => roots.push((z, r)),
            }
        }
    }
    roots
}

fn nearest(roots: &[(C64, f64)], preferred: C64) -> (C64, f64) {
    roots
        .iter()
        .copied()
        .min_by(|a, b| torus_norm(a.0 - preferred).total_cmp(&torus_norm(b.0 - preferred)).then(b.0.im.total_cmp(&a.0.im)))
        .expect("at least one root")
}

/// Finds the roots of `det S_s` in a pole-free `window` and validates their count.
///
/// `preferred` is tried first and decides which root is returned when the
/// window holds two.
pub fn find_roots(op: &BlockOperator<'_>, window: RootWindow, preferred: C64, s: usize, opts: &ThetaOptions) -> Result<ThetaStep, MsaError> {
    let f = |z: C64| op.det(z);
    let (winding, moduli) = winding_number(&f, &window, opts.boundary_samples, opts.refine_depth).map_err(|e| match e {
        MsaError::PoleOnContour { at, .. } => MsaError::PoleOnContour { s, at },
        other => other,
    })?;
    if winding <= 0 {
        return Err(MsaError::NoRootInWindow { s, center: window.center, radius: window.radius });
    }
    let med = median(moduli);
    let tol = opts.newton_tolerance * med;
    let roots = collect_roots(&f, &window, preferred, winding, tol, STAGNATION_ACCEPT * med, opts.newton_iterations, 8);
    if roots.len() as i64 != winding {
        return Err(MsaError::WindingMismatch { s, roots: roots.len(), winding });
    }
    let (theta, residual) = nearest(&roots, preferred);
    let pairing_residual = (op.model.hopping.is_symmetric() && med > 0.0).then(|| op.det(-theta).map(|v| v.norm() / med).unwrap_or(f64::INFINITY));
    Ok(ThetaStep {
        s,
        theta,
        residual,
        tolerance: tol,
        window,
        winding,
        poles: 0,
        roots: roots.iter().map(|r| r.0).collect(),
        winding_ok: roots.len() == window.expected,
        pairing_residual,
    })
}

/// Root search in a disc that may contain poles of `S_s`.
///
/// Zeros are those of the entire function `det M_s = det M_rest · det S_s`,
/// found by Newton and counted by its winding number; poles are counted by the
/// winding of `det M_rest`. The window passes when zeros minus poles equals
/// the expected count. The radius is shrunk until no unperturbed pole lies
/// within 15% of the boundary.
pub fn find_roots_meromorphic(op: &BlockOperator<'_>, window: RootWindow, theta0: C64, preferred: C64, s: usize, opts: &ThetaOptions) -> Result<ThetaStep, MsaError> {
    let poles = op.rest_pole_distances(window.center, theta0);
    let mut radius = window.radius;
    for _ in 0..40 {
        if !poles.iter().any(|&d| (d - radius).abs() < 0.15 * radius) {
            break;
        }
        radius *= 0.85;
    }
    let window = RootWindow { radius, ..window };
    let on_contour = |e: MsaError| match e {
        MsaError::PoleOnContour { at, .. } => MsaError::PoleOnContour { s, at },
        other => other,
    };
    let full = |z: C64| Some(op.det_full(z)).filter(|d| d.re.is_finite() && d.im.is_finite() && d.norm() > 0.0);
    let rest = |z: C64| Some(op.det_rest(z)).filter(|d| d.re.is_finite() && d.im.is_finite() && d.norm() > 0.0);
    let (zeros, moduli) = winding_number(&full, &window, opts.boundary_samples, opts.refine_depth).map_err(on_contour)?;
    let (pole_count, _) = winding_number(&rest, &window, opts.boundary_samples, opts.refine_depth).map_err(on_contour)?;
    let med = median(moduli);
    let tol = opts.newton_tolerance * med;
    let roots = collect_roots(&full, &window, preferred, zeros, tol, STAGNATION_ACCEPT * med, opts.newton_iterations.min(25), 6);
    if roots.is_empty() {
        return Err(MsaError::NoRootInWindow { s, center: window.center, radius: window.radius });
    }
    if roots.len() as i64 != zeros {
        return Err(MsaError::WindingMismatch { s, roots: roots.len(), winding: zeros });
    }
    let (theta, residual) = nearest(&roots, preferred);
    let net = zeros - pole_count;
    Ok(ThetaStep {
        s,
        theta,
        residual,
        tolerance: tol,
        window,
        winding: net,
        poles: pole_count.max(0) as usize,
        roots: roots.iter().map(|r| r.0).collect(),
        winding_ok: net == window.expected as i64,
        pairing_residual: None,
    })
}

/// `θ_s` on the translated enlarged block `shape` with core `core`.
///
/// `candidate` is the (C2) point `z ≡ θ_{s−1} − (l/2)·ω`, when the previous
/// scale fell in case (C2).
#[allow(clippy::too_many_arguments)]
pub fn track_theta(
    model: &ModelSpec,
    shape: &[HalfPoint],
    core: &[HalfPoint],
    energy: C64,
    s: usize,
    prev: C64,
    theta0: C64,
    log_delta_prev: f64,
    window_exponent: f64,
    candidate: Option<C64>,
    opts: &ThetaOptions,
) -> Result<ThetaStep, MsaError> {
    let op = BlockOperator::new(model, shape, core, energy)?;
    let window = root_window(&op, prev, theta0, log_delta_prev, window_exponent, candidate);
    let preferred = candidate.unwrap_or(prev);
    match find_roots(&op, window, preferred, s, opts) {
        Err(MsaError::NoRootInWindow { .. } | MsaError::WindingMismatch { .. }) => {
            let base = (window_exponent * log_delta_prev).exp().min(0.25).min(0.5 * model.potential.strip);
            let wide = RootWindow { radius: base.min(10.0 * window.radius), ..window };
            find_roots_meromorphic(&op, wide, theta0, preferred, s, opts)
        }
        other => other,
    }
}
