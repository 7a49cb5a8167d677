//! Eigenvector decay profiles and the arithmetic test on the phase.

use std::io::{self, Write};

use serde::Serialize;

use super::DynamicsError;
use crate::greens::fit_line;
use crate::lattice::{log_rho, Site};
use crate::linalg::{self, CMat};
use crate::model::torus_dist;

/// Entries below this modulus are left out of the decay fit.
pub const PROFILE_FLOOR: f64 = 1e-14;
/// Violations stored verbatim by [`arithmetic_phase_test`]; the count is exact.
pub const STORED_VIOLATIONS: usize = 1024;
/// Largest number of lattice points [`arithmetic_phase_test`] will enumerate.
pub const PHASE_SCAN_CAP: u64 = 1 << 26;

#[derive(Clone, Debug, Serialize)]
pub struct EigenProfile {
    pub index: usize,
    pub eigenvalue: f64,
    pub center: Site,
    /// Largest `|ψ|` at each distance from the center.
    pub samples: Vec<(i64, f64)>,
    /// `c` in `|ψ| ≈ e^{b − c log^ρ(1+dist)}`; absent with fewer than two usable distances.
    pub fitted_c: Option<f64>,
    /// Coefficient of determination of the fit.
    pub goodness: Option<f64>,
    /// `|ψ(center)|²`.
    pub center_mass: f64,
    /// `1 / Σ|ψ|⁴`.
    pub participation: f64,
    pub norm_defect: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct LocalizationSummary {
    pub rho: f64,
    pub target_rate: f64,
    pub profiles: Vec<EigenProfile>,
    pub median_c: Option<f64>,
    /// Fraction of eigenvectors with `fitted_c ≥ target_rate`.
    pub fraction_localized: f64,
    pub median_participation: f64,
}

impl LocalizationSummary {
    /// Writes `eig_index,eigenvalue,center,fitted_c,goodness` rows; missing fits are empty fields.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "eig_index,eigenvalue,center,fitted_c,goodness")?;
        let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
        for p in &self.profiles {
            writeln!(w, "{},{},{},{},{}", p.index, p.eigenvalue, p.center.label(), opt(p.fitted_c), opt(p.goodness))?;
        }
        Ok(())
    }
}

fn median(mut xs: Vec<f64>) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    xs.sort_by(f64::total_cmp);
    let m = xs.len() / 2;
    Some(if xs.len() % 2 == 1 { xs[m] } else { 0.5 * (xs[m - 1] + xs[m]) })
}

fn profile(index: usize, eigenvalue: f64, sites: &[Site], psi: &[f64], rho: f64) -> EigenProfile {
    let (ci, _) = psi.iter().enumerate().fold((0, -1.0), |best, (i, &m)| if m > best.1 { (i, m) } else { best });
    let center = sites[ci].clone();
    let norm2: f64 = psi.iter().map(|m| m * m).sum();
    let participation = 1.0 / psi.iter().map(|m| m.powi(4)).sum::<f64>();
    let max_dist = sites.iter().map(|s| s.dist(&center)).max().unwrap_or(0);
    let mut envelope = vec![0.0f64; max_dist as usize + 1];
    let mut pts = Vec::new();
    for (s, &m) in sites.iter().zip(psi) {
        let d = s.dist(&center);
        envelope[d as usize] = envelope[d as usize].max(m);
        if m > PROFILE_FLOOR {
            pts.push((log_rho(d as f64, rho), m.ln()));
        }
    }
    let fit = fit_line(&pts);
    let goodness = fit.map(|(slope, b)| {
        let my = pts.iter().map(|p| p.1).sum::<f64>() / pts.len() as f64;
        let ss_tot: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
        let ss_res: f64 = pts.iter().map(|p| (p.1 - slope * p.0 - b).powi(2)).sum();
        if ss_tot > 0.0 {
            1.0 - ss_res / ss_tot
        } else {
            1.0
        }
    });
    EigenProfile {
        index,
        eigenvalue,
        center,
        samples: envelope.into_iter().enumerate().map(|(d, m)| (d as i64, m)).collect(),
        fitted_c: fit.map(|(slope, _)| -slope),
        goodness,
        center_mass: psi[ci] * psi[ci],
        participation,
        norm_defect: (norm2.sqrt() - 1.0).abs(),
    }
}

/// Diagonalises `h` and fits every eigenvector to `e^{b − c log^ρ(1+dist)}` around its peak.
pub fn localization_profile(h: &CMat, sites: &[Site], rho: f64, target_rate: f64) -> Result<LocalizationSummary, DynamicsError> {
    if sites.len() != h.nrows() {
        return Err(DynamicsError::InvalidInput("site list does not match the matrix".into()));
    }
    let defect = linalg::hermitian_defect(h);
    if defect > 1e-12 * linalg::max_row_sum(h).max(1.0) {
        return Err(DynamicsError::NotHermitian { defect });
    }
    let (values, vectors) = linalg::hermitian_eigen(h);
    Ok(profiles_from_eigen(&values, &vectors, sites, rho, target_rate))
}

/// Same summary from an existing eigendecomposition (columns of `vectors`).
pub fn profiles_from_eigen(values: &[f64], vectors: &CMat, sites: &[Site], rho: f64, target_rate: f64) -> LocalizationSummary {
    let profiles: Vec<EigenProfile> = values
        .iter()
        .enumerate()
        .map(|(k, &lam)| {
            let psi: Vec<f64> = (0..sites.len()).map(|i| vectors[(i, k)].norm()).collect();
            profile(k, lam, sites, &psi, rho)
        })
        .collect();
    let cs: Vec<f64> = profiles.iter().filter_map(|p| p.fitted_c).collect();
    let localized = profiles.iter().filter(|p| p.fitted_c.is_some_and(|c| c >= target_rate) || p.center_mass > 1.0 - 1e-12).count();
    let fraction_localized = if profiles.is_empty() { 0.0 } else { localized as f64 / profiles.len() as f64 };
    let median_participation = median(profiles.iter().map(|p| p.participation).collect()).unwrap_or(0.0);
    LocalizationSummary { rho, target_rate, median_c: median(cs), fraction_localized, median_participation, profiles }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PhaseViolation {
    pub n: Site,
    /// `‖2θ + n·ω‖_T`.
    pub distance: f64,
    /// `‖n‖^{−τ}`.
    pub threshold: f64,
}

/// Exhaustive record of `‖2θ + n·ω‖_T ≤ ‖n‖^{−τ}` over `0 < ‖n‖ ≤ N_max`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PhaseEvidence {
    pub theta: f64,
    pub omega: Vec<f64>,
    pub tau: f64,
    pub n_max: u64,
    pub checked: u64,
    pub violation_count: u64,
    /// First [`STORED_VIOLATIONS`] violators in enumeration order.
    pub violations: Vec<PhaseViolation>,
    /// Violator of largest norm (lexicographically first among ties).
    pub largest_violator: Option<PhaseViolation>,
}

pub fn arithmetic_phase_test(theta: f64, omega: &[f64], tau: f64, n_max: u64) -> Result<PhaseEvidence, DynamicsError> {
    let d = omega.len();
    if n_max < 1 || d == 0 {
        return Err(DynamicsError::InvalidInput("need N_max ≥ 1 and a nonempty frequency".into()));
    }
    let side = 2 * n_max + 1;
    let total = (side as f64).powi(d as i32);
    if total > PHASE_SCAN_CAP as f64 {
        return Err(DynamicsError::InvalidInput(format!("scan of {total:e} points exceeds the cap {PHASE_SCAN_CAP}")));
    }
    let r = n_max as i64;
    let mut coords = vec![-r; d];
    let mut checked = 0;
    let mut violation_count = 0;
    let mut violations = Vec::new();
    let mut largest: Option<PhaseViolation> = None;
    loop {
        let n = Site::new(coords.clone());
        let norm = n.norm();
        if norm > 0 {
            checked += 1;
            let distance = torus_dist(2.0 * theta + n.dot(omega));
            let threshold = (norm as f64).powf(-tau);
            if distance <= threshold {
                violation_count += 1;
                let v = PhaseViolation { n, distance, threshold };
                if largest.as_ref().is_none_or(|l| norm > l.n.norm()) {
                    largest = Some(v.clone());
                }
                if violations.len() < STORED_VIOLATIONS {
                    violations.push(v);
                }
            }
        }
        let mut k = d;
        loop {
            if k == 0 {
                return Ok(PhaseEvidence { theta, omega: omega.to_vec(), tau, n_max, checked, violation_count, violations, largest_violator: largest });
            }
            k -= 1;
            if coords[k] < r {
                coords[k] += 1;
                break;
            }
            coords[k] = -r;
        }
    }
}
