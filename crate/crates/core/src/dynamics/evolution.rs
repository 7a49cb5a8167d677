//! Exact time evolution through the Hermitian eigendecomposition, moments and
//! exponentially weighted time averages.

use std::io::{self, Write};

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use super::DynamicsError;
use crate::lattice::Site;
use crate::linalg::{self, c, CMat, C64};

/// Unitarity tolerance of the eigenvector matrix.
pub const UNITARY_TOLERANCE: f64 = 1e-8;
/// Boundary mass above which finite-box truncation is flagged.
pub const BOUNDARY_MASS_WARNING: f64 = 1e-6;
/// Default Gauss–Laguerre node count.
pub const LAGUERRE_NODES: usize = 64;
/// Required relative agreement of the two time-average paths.
pub const TIME_AVERAGE_AGREEMENT: f64 = 1e-6;
/// Gauss–Legendre nodes per panel of the composite time-average rule.
pub const LEGENDRE_PER_PANEL: usize = 16;
/// Most panels the composite rule will use before accepting a coarser grid.
pub const QUADRATURE_PANEL_CAP: usize = 4096;
/// Split point `u₀` of `∫₀^∞ e^{−u}…du`; the Laguerre tail beyond it weighs `e^{−u₀} ≈ 2·10⁻¹⁶`.
const PANEL_SPAN: f64 = 36.0;

/// Eigendecomposition `H = U Λ U*` of a Hermitian restriction.
#[derive(Clone, Debug, Serialize)]
pub struct EvolutionData {
    pub sites: Vec<Site>,
    pub eigenvalues: Vec<f64>,
    #[serde(skip)]
    pub eigenvectors: CMat,
    pub initial: usize,
    pub hermitian_defect: f64,
    /// `‖U*U − I‖∞`.
    pub unitarity_defect: f64,
    /// `max|UΛU* − H| / max|H|`.
    pub reconstruction_defect: f64,
}

impl EvolutionData {
    /// Diagonalises `h`; the initial vector defaults to the origin, else the first site.
    pub fn new(h: &CMat, sites: Vec<Site>) -> Result<Self, DynamicsError> {
        if sites.len() != h.nrows() {
            return Err(DynamicsError::InvalidInput("site list does not match the matrix".into()));
        }
        let defect = linalg::hermitian_defect(h);
        if defect > 1e-12 * linalg::max_row_sum(h).max(1.0) {
            return Err(DynamicsError::NotHermitian { defect });
        }
        let (eigenvalues, eigenvectors) = linalg::hermitian_eigen(h);
        let unitarity_defect = linalg::identity_residual(&eigenvectors.adjoint(), &eigenvectors);
        let n = eigenvalues.len();
        let lam = CMat::from_fn(n, n, |i, j| if i == j { c(eigenvalues[i], 0.0) } else { c(0.0, 0.0) });
        let rebuilt = &eigenvectors * lam * eigenvectors.adjoint();
        let reconstruction_defect = linalg::max_abs(&(rebuilt - h)) / linalg::max_abs(h).max(1e-300);
        let initial = sites.iter().position(|s| s.norm() == 0).unwrap_or(0);
        Ok(EvolutionData { sites, eigenvalues, eigenvectors, initial, hermitian_defect: defect, unitarity_defect, reconstruction_defect })
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn delta(&self, idx: usize) -> Vec<C64> {
        let mut v = vec![c(0.0, 0.0); self.len()];
        v[idx] = c(1.0, 0.0);
        v
    }

    /// `U*ψ`.
    pub fn spectral_coefficients(&self, psi: &[C64]) -> Vec<C64> {
        let n = self.len();
        (0..n).map(|j| (0..n).map(|i| self.eigenvectors[(i, j)].conj() * psi[i]).sum()).collect()
    }

    /// Mask of the outer shell used for the boundary-mass gate: sites whose
    /// distance to the box center is within `max(1, R/10)` of the largest one.
    pub fn boundary_mask(&self) -> Vec<bool> {
        let center = &self.sites[self.initial];
        let r = self.sites.iter().map(|s| s.dist(center)).max().unwrap_or(0);
        let width = (r / 10).max(1);
        self.sites.iter().map(|s| s.dist(center) > r - width).collect()
    }
}

/// Amplitudes `amp(n,t) = ⟨e^{−itH}ψ₀, δ_n⟩` on a time grid.
#[derive(Clone, Debug, Serialize)]
pub struct AmplitudeTable {
    pub times: Vec<f64>,
    /// `amps[i][n]` at `times[i]`.
    pub amps: Vec<Vec<C64>>,
    /// `Σ|amp|² − 1` per time.
    pub conservation_defect: Vec<f64>,
}

pub fn evolve_amplitudes(data: &EvolutionData, psi0: &[C64], times: &[f64]) -> Result<AmplitudeTable, DynamicsError> {
    if psi0.len() != data.len() {
        return Err(DynamicsError::InvalidInput("initial vector has the wrong length".into()));
    }
    let n = data.len();
    let coeff = data.spectral_coefficients(psi0);
    let norm0: f64 = psi0.iter().map(|z| z.norm_sqr()).sum();
    let mut amps = Vec::with_capacity(times.len());
    let mut defects = Vec::with_capacity(times.len());
    for &t in times {
        let amp: Vec<C64> = if t == 0.0 {
            psi0.to_vec()
        } else {
            let phased: Vec<C64> = coeff.iter().zip(&data.eigenvalues).map(|(b, &l)| b * C64::from_polar(1.0, -l * t)).collect();
            (0..n).map(|i| (0..n).map(|j| data.eigenvectors[(i, j)] * phased[j]).sum()).collect()
        };
        let mass: f64 = amp.iter().map(|z| z.norm_sqr()).sum();
        defects.push((mass - norm0).abs());
        amps.push(amp);
    }
    Ok(AmplitudeTable { times: times.to_vec(), amps, conservation_defect: defects })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MomentValue {
    pub value: f64,
    pub boundary_mass: f64,
    pub boundary_warning: bool,
}

/// `Σ_n (1 + ‖n − n₀‖)^p |amp(n)|²` with the boundary-mass gate.
pub fn moment_p(data: &EvolutionData, amp: &[C64], p: f64) -> MomentValue {
    let center = &data.sites[data.initial];
    let mask = data.boundary_mask();
    let mut value = 0.0;
    let mut boundary_mass = 0.0;
    for (i, a) in amp.iter().enumerate() {
        let w = a.norm_sqr();
        value += (1.0 + data.sites[i].dist(center) as f64).powf(p) * w;
        if mask[i] {
            boundary_mass += w;
        }
    }
    MomentValue { value, boundary_mass, boundary_warning: boundary_mass > BOUNDARY_MASS_WARNING }
}

#[derive(Clone, Debug, Serialize)]
pub struct MomentSeries {
    pub p: f64,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub conservation_defect: Vec<f64>,
    pub boundary_mass: Vec<f64>,
}

impl MomentSeries {
    pub fn max_boundary_mass(&self) -> f64 {
        self.boundary_mass.iter().copied().fold(0.0, f64::max)
    }

    /// Writes `t,value,conservation_defect` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t,value,conservation_defect")?;
        for i in 0..self.times.len() {
            writeln!(w, "{},{},{}", self.times[i], self.values[i], self.conservation_defect[i])?;
        }
        Ok(())
    }
}

pub fn moment_series(data: &EvolutionData, psi0: &[C64], p: f64, times: &[f64]) -> Result<MomentSeries, DynamicsError> {
    let table = evolve_amplitudes(data, psi0, times)?;
    let mut values = Vec::with_capacity(times.len());
    let mut boundary = Vec::with_capacity(times.len());
    for amp in &table.amps {
        let m = moment_p(data, amp, p);
        values.push(m.value);
        boundary.push(m.boundary_mass);
    }
    Ok(MomentSeries { p, times: times.to_vec(), values, conservation_defect: table.conservation_defect, boundary_mass: boundary })
}

/// Gauss–Laguerre nodes and weights for `∫₀^∞ e^{−x} f(x) dx` (Golub–Welsch).
pub fn gauss_laguerre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let jac = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            (2 * i + 1) as f64
        } else if i + 1 == j {
            j as f64
        } else if j + 1 == i {
            i as f64
        } else {
            0.0
        }
    });
    let eig = SymmetricEigen::new(jac);
    let mut pairs: Vec<(f64, f64)> = (0..n).map(|k| (eig.eigenvalues[k], eig.eigenvectors[(0, k)].powi(2))).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

/// Gauss–Legendre nodes and weights on `[−1, 1]` (Golub–Welsch).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let jac = DMatrix::from_fn(n, n, |i, j| {
        let k = i.max(j) as f64;
        if i.abs_diff(j) == 1 {
            k / (4.0 * k * k - 1.0).sqrt()
        } else {
            0.0
        }
    });
    let eig = SymmetricEigen::new(jac);
    let mut pairs: Vec<(f64, f64)> = (0..n).map(|k| (eig.eigenvalues[k], 2.0 * eig.eigenvectors[(0, k)].powi(2))).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}

/// Nodes `u` and weights for `∫₀^∞ e^{−u} f(u) du` when `f` oscillates at angular
/// frequency up to `omega`.
///
/// Slow integrands get the plain Laguerre rule. Otherwise `[0, u₀]` is cut into
/// panels of width `min(1, 2/omega)` carrying Legendre rules with the weight
/// `e^{−u}` folded in, and the Laguerre rule covers `[u₀, ∞)`.
pub fn exponential_rule(omega: f64, laguerre_nodes: usize) -> (Vec<f64>, Vec<f64>) {
    let (lx, lw) = gauss_laguerre(laguerre_nodes.max(2));
    if !(omega > 0.5) {
        return (lx, lw);
    }
    let width = (2.0 / omega).min(1.0);
    let panels = ((PANEL_SPAN / width).ceil() as usize).min(QUADRATURE_PANEL_CAP);
    let h = PANEL_SPAN / panels as f64;
    let (gx, gw) = gauss_legendre(LEGENDRE_PER_PANEL);
    let mut nodes = Vec::with_capacity(panels * LEGENDRE_PER_PANEL + lx.len());
    let mut weights = Vec::with_capacity(nodes.capacity());
    for k in 0..panels {
        let mid = (k as f64 + 0.5) * h;
        for (x, w) in gx.iter().zip(&gw) {
            let u = mid + 0.5 * h * x;
            nodes.push(u);
            weights.push(0.5 * h * w * (-u).exp());
        }
    }
    let tail = (-PANEL_SPAN).exp();
    for (x, w) in lx.iter().zip(&lw) {
        nodes.push(PANEL_SPAN + x);
        weights.push(tail * w);
    }
    (nodes, weights)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TimeAverage {
    pub p: f64,
    pub horizon_t: f64,
    pub quadrature: f64,
    pub spectral: f64,
    pub relative_difference: f64,
    /// Largest sampled time `x_max T/2`.
    pub quadrature_horizon: f64,
}

/// `(2/T)∫₀^∞ e^{−2t/T} m_p(t) dt` by [`exponential_rule`] and by the spectral double sum
/// `Σ_{j,k} G_{jk} b_j b̄_k / (1 + i(λ_j − λ_k)T/2)`, `G = U* diag((1+‖n‖)^p) U`.
pub fn time_avg_moment(data: &EvolutionData, psi0: &[C64], p: f64, horizon_t: f64, nodes: usize) -> Result<TimeAverage, DynamicsError> {
    if !(horizon_t > 0.0) {
        return Err(DynamicsError::InvalidInput("T must be positive".into()));
    }
    let b = data.spectral_coefficients(psi0);
    let support = || data.eigenvalues.iter().zip(&b).filter(|(_, bj)| bj.norm_sqr() > 1e-30).map(|(l, _)| *l);
    let spread = support().fold(f64::NEG_INFINITY, f64::max) - support().fold(f64::INFINITY, f64::min);
    let (x, w) = exponential_rule(spread.max(0.0) * horizon_t / 2.0, nodes);
    let times: Vec<f64> = x.iter().map(|xi| xi * horizon_t / 2.0).collect();
    let series = moment_series(data, psi0, p, &times)?;
    let quadrature: f64 = series.values.iter().zip(&w).map(|(m, wi)| m * wi).sum();

    let n = data.len();
    let center = &data.sites[data.initial];
    let weights: Vec<f64> = data.sites.iter().map(|s| (1.0 + s.dist(center) as f64).powf(p)).collect();
    let u = &data.eigenvectors;
    let wu = CMat::from_fn(n, n, |i, j| u[(i, j)] * weights[i]);
    let g = u.adjoint() * wu;
    let mut spectral = c(0.0, 0.0);
    for j in 0..n {
        for k in 0..n {
            let kernel = c(1.0, (data.eigenvalues[j] - data.eigenvalues[k]) * horizon_t / 2.0).inv();
            spectral += g[(k, j)] * b[j] * b[k].conj() * kernel;
        }
    }
    let spectral = spectral.re;
    let relative_difference = (quadrature - spectral).abs() / spectral.abs().max(1e-300);
    let out = TimeAverage { p, horizon_t, quadrature, spectral, relative_difference, quadrature_horizon: times.last().copied().unwrap_or(0.0) };
    if relative_difference > TIME_AVERAGE_AGREEMENT {
        return Err(DynamicsError::QuadratureDisagreement { quadrature, spectral, relative: relative_difference });
    }
    Ok(out)
}
