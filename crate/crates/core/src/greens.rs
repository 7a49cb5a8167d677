//! Finite-volume Green's functions and the matrix estimates built on them:
//! Schur complements, the Hadamard adjugate bound, determinant perturbation,
//! Combes–Thomas decay, Neumann-series inverses and determinant evenness.

use std::io::{self, Write};

use serde::ser::SerializeSeq;
use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::lattice::{log_rho, HalfPoint, QuasiMetricCert, Site};
use crate::linalg::{self, c, CMat, C64};
use crate::model::{assemble_doubled, ModelError, ModelSpec, OperatorRestriction};

/// Relative pivot threshold below which a restriction counts as singular.
pub const SINGULAR_THRESHOLD: f64 = 1e-14;
/// Relative tolerance of the Schur factorization identity.
pub const FACTORIZATION_TOLERANCE: f64 = 1e-8;
/// Tolerance of the determinant evenness check.
pub const EVENNESS_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GreenError {
    #[error("matrix is singular: smallest pivot {min_pivot:e} against scale {scale:e}")]
    Singular { min_pivot: f64, scale: f64 },
    #[error("inverse residual {residual:e} exceeds the tolerance {tolerance:e}")]
    IllConditioned { residual: f64, tolerance: f64 },
    #[error("leading block A is singular (smallest pivot {min_pivot:e})")]
    ASingular { min_pivot: f64 },
    #[error("Combes-Thomas denominator {denominator:e} is not positive")]
    DenominatorNonpositive { denominator: f64 },
    #[error("Neumann series is not contractive: ‖D⁻¹P‖ ≈ {norm}")]
    NotContractive { norm: f64 },
    #[error("site set is not symmetric about the origin")]
    AsymmetricBox,
    #[error("matrix is not Hermitian (defect {defect:e})")]
    NotHermitian { defect: f64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn serialize_matrix<S: Serializer>(m: &CMat, s: S) -> Result<S::Ok, S::Error> {
    let mut seq = s.serialize_seq(Some(m.nrows()))?;
    for i in 0..m.nrows() {
        let row: Vec<[f64; 2]> = (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect();
        seq.serialize_element(&row)?;
    }
    seq.end()
}

/// Solved inverse of a restriction.
#[derive(Clone, Debug, Serialize)]
pub struct GreenMatrix {
    pub sites: Vec<Site>,
    pub theta: C64,
    pub energy: C64,
    #[serde(serialize_with = "serialize_matrix")]
    pub inverse: CMat,
    /// Power-iteration estimate of `‖T⁻¹‖`.
    pub op_norm: f64,
    /// `‖T·T⁻¹ − I‖∞`.
    pub residual: f64,
    pub residual_tolerance: f64,
    pub min_pivot: f64,
}

impl GreenMatrix {
    pub fn entry(&self, i: usize, j: usize) -> C64 {
        self.inverse[(i, j)]
    }

    /// `‖T⁻¹‖` from a full singular value decomposition.
    pub fn exact_norm(&self) -> f64 {
        linalg::spectral_norm(&self.inverse)
    }
}

/// Inverts a dense matrix with the pivot and residual gates of [`green_solve`].
pub fn invert_checked(m: &CMat) -> Result<(CMat, f64, f64, f64), GreenError> {
    let lu = linalg::lu_inverse(m, SINGULAR_THRESHOLD).map_err(|f| GreenError::Singular { min_pivot: f.min_pivot, scale: f.max_entry })?;
    let n = m.nrows() as f64;
    let residual = linalg::identity_residual(m, &lu.inverse);
    let cond = linalg::max_row_sum(m) * linalg::max_row_sum(&lu.inverse);
    let tolerance = 1e-8f64.max(10.0 * n * f64::EPSILON * cond);
    if !(residual <= tolerance) {
        return Err(GreenError::IllConditioned { residual, tolerance });
    }
    Ok((lu.inverse, residual, tolerance, lu.min_pivot))
}

/// `T_Λ⁻¹` by LU with partial pivoting, gated by pivot size and residual.
pub fn green_solve(r: &OperatorRestriction) -> Result<GreenMatrix, GreenError> {
    let (inverse, residual, residual_tolerance, min_pivot) = invert_checked(&r.matrix)?;
    let op_norm = linalg::power_norm_default(&inverse);
    Ok(GreenMatrix { sites: r.sites.clone(), theta: r.theta, energy: r.energy.e, inverse, op_norm, residual, residual_tolerance, min_pivot })
}

// ---------------------------------------------------------------------------
// Decay fits

/// One `(x, y)` entry compared with its bound.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecayPair {
    pub x: Site,
    pub y: Site,
    pub dist: i64,
    pub modulus: f64,
    pub bound: f64,
    pub pass: bool,
}

/// Entries beyond a cutoff radius checked against a decay bound, with a
/// least-squares fit of `log|G| ≈ b − α_fit log^ρ(1+dist)`.
#[derive(Clone, Debug, Serialize)]
pub struct DecayFit {
    pub pairs: Vec<DecayPair>,
    pub target_rate: f64,
    pub rho: f64,
    pub cutoff: f64,
    pub alpha_fit: Option<f64>,
    pub intercept: Option<f64>,
    /// Indices into `pairs` that exceed their bound.
    pub violations: Vec<usize>,
    /// `max modulus/bound` over the checked pairs.
    pub worst_ratio: f64,
}

impl DecayFit {
    /// Builds the fit from pairs already restricted to `dist > cutoff`.
    pub fn from_pairs(pairs: Vec<DecayPair>, target_rate: f64, rho: f64, cutoff: f64) -> Self {
        let violations = pairs.iter().enumerate().filter(|(_, p)| !p.pass).map(|(i, _)| i).collect();
        let worst_ratio = pairs.iter().filter(|p| p.bound > 0.0).map(|p| p.modulus / p.bound).fold(0.0, f64::max);
        let pts: Vec<(f64, f64)> = pairs
            .iter()
            .filter(|p| p.dist > 0 && p.modulus > 1e-300)
            .map(|p| (log_rho(p.dist as f64, rho), p.modulus.ln()))
            .collect();
        let (alpha_fit, intercept) = fit_line(&pts).map(|(slope, b)| (Some(-slope), Some(b))).unwrap_or((None, None));
        DecayFit { pairs, target_rate, rho, cutoff, alpha_fit, intercept, violations, worst_ratio }
    }

    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    /// Writes `x,y,dist,modulus,bound,pass` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "x,y,dist,modulus,bound,pass")?;
        for p in &self.pairs {
            writeln!(w, "{},{},{},{},{},{}", p.x.label(), p.y.label(), p.dist, p.modulus, p.bound, p.pass)?;
        }
        Ok(())
    }
}

/// Least-squares line `y ≈ slope·x + intercept`; `None` without two distinct abscissae.
pub fn fit_line(pts: &[(f64, f64)]) -> Option<(f64, f64)> {
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return None;
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx <= 1e-300 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

/// Checks `|G(x,y)| ≤ e^{−rate·log^ρ(1+‖x−y‖)}` for all pairs with `‖x−y‖ > cutoff`.
pub fn decay_scan(g: &GreenMatrix, rate: f64, rho: f64, cutoff: f64) -> DecayFit {
    let mut pairs = Vec::new();
    for (i, x) in g.sites.iter().enumerate() {
        for (j, y) in g.sites.iter().enumerate() {
            let dist = x.dist(y);
            if (dist as f64) <= cutoff {
                continue;
            }
            let modulus = g.inverse[(i, j)].norm();
            let bound = (-rate * log_rho(dist as f64, rho)).exp();
            pairs.push(DecayPair { x: x.clone(), y: y.clone(), dist, modulus, bound, pass: modulus <= bound });
        }
    }
    DecayFit::from_pairs(pairs, rate, rho, cutoff)
}

// ---------------------------------------------------------------------------
// Schur complement

/// Block split `M = [[A, B], [C, D]]` with `S = D − C A⁻¹ B`.
#[derive(Clone, Debug, Serialize)]
pub struct SchurData {
    pub lambda1: Vec<usize>,
    pub lambda2: Vec<usize>,
    #[serde(skip)]
    pub a: CMat,
    #[serde(skip)]
    pub b: CMat,
    #[serde(skip)]
    pub c: CMat,
    #[serde(skip)]
    pub d: CMat,
    #[serde(serialize_with = "serialize_matrix")]
    pub s: CMat,
    pub det_m: C64,
    pub det_a: C64,
    pub det_s: C64,
    /// `|det M − det A·det S| / max(|det M|, |det A·det S|)`.
    pub factorization_defect: f64,
    pub norm_a_inv: f64,
    /// `None` when `S` (equivalently `M`) is singular.
    pub norm_s_inv: Option<f64>,
    pub norm_m_inv: Option<f64>,
    pub norm_b: f64,
    pub norm_c: f64,
    /// `‖B‖, ‖C‖ ≤ 1`, the hypothesis of the upper sandwich bound.
    pub hypothesis_holds: bool,
    pub sandwich_lower: bool,
    pub sandwich_upper: bool,
}

impl SchurData {
    pub fn factorization_holds(&self) -> bool {
        self.factorization_defect <= FACTORIZATION_TOLERANCE
    }

    /// Both sandwich inequalities, the upper one only under its hypothesis.
    pub fn sandwich_holds(&self) -> bool {
        self.sandwich_lower && (!self.hypothesis_holds || self.sandwich_upper)
    }
}

/// Schur complement of the `Λ₁` block; verifies the factorization and the
/// norm sandwich `‖S⁻¹‖ ≤ ‖M⁻¹‖ < 4(1+‖A⁻¹‖)²(1+‖S⁻¹‖)` with exact norms.
pub fn schur_complement(m: &CMat, lambda1: &[usize], lambda2: &[usize]) -> Result<SchurData, GreenError> {
    let n = m.nrows();
    let mut seen = vec![false; n];
    for &i in lambda1.iter().chain(lambda2) {
        if i >= n || seen[i] {
            return Err(GreenError::InvalidInput("Λ₁ and Λ₂ must partition the index set".into()));
        }
        seen[i] = true;
    }
    if seen.iter().any(|s| !s) || lambda1.is_empty() {
        return Err(GreenError::InvalidInput("Λ₁ and Λ₂ must partition the index set with Λ₁ nonempty".into()));
    }
    let a = linalg::submatrix(m, lambda1, lambda1);
    let b = linalg::submatrix(m, lambda1, lambda2);
    let cc = linalg::submatrix(m, lambda2, lambda1);
    let d = linalg::submatrix(m, lambda2, lambda2);
    let a_lu = linalg::lu_inverse(&a, SINGULAR_THRESHOLD).map_err(|f| GreenError::ASingular { min_pivot: f.min_pivot })?;
    let s = &d - &cc * &a_lu.inverse * &b;
    let det_m = linalg::determinant(m);
    let det_a = a_lu.determinant;
    let det_s = linalg::determinant(&s);
    let prod = det_a * det_s;
    let scale = det_m.norm().max(prod.norm());
    let factorization_defect = if scale == 0.0 { 0.0 } else { (det_m - prod).norm() / scale };
    let norm_a_inv = linalg::spectral_norm(&a_lu.inverse);
    let norm_b = linalg::spectral_norm(&b);
    let norm_c = linalg::spectral_norm(&cc);
    let s_min = linalg::sigma_min(&s);
    let m_min = linalg::sigma_min(m);
    let scale_s = linalg::max_abs(&s).max(1e-300);
    let scale_m = linalg::max_abs(m).max(1e-300);
    let norm_s_inv = (s.nrows() == 0 || s_min > SINGULAR_THRESHOLD * scale_s).then(|| if s.nrows() == 0 { 0.0 } else { 1.0 / s_min });
    let norm_m_inv = (m_min > SINGULAR_THRESHOLD * scale_m).then(|| 1.0 / m_min);
    let hypothesis_holds = norm_b <= 1.0 && norm_c <= 1.0;
    let (sandwich_lower, sandwich_upper) = match (norm_s_inv, norm_m_inv) {
        (Some(si), Some(mi)) => (si <= mi * (1.0 + 1e-10), mi < 4.0 * (1.0 + norm_a_inv).powi(2) * (1.0 + si)),
        (None, None) => (true, true),
        _ => (false, false),
    };
    Ok(SchurData {
        lambda1: lambda1.to_vec(),
        lambda2: lambda2.to_vec(),
        a,
        b,
        c: cc,
        d,
        s,
        det_m,
        det_a,
        det_s,
        factorization_defect,
        norm_a_inv,
        norm_s_inv,
        norm_m_inv,
        norm_b,
        norm_c,
        hypothesis_holds,
        sandwich_lower,
        sandwich_upper,
    })
}

/// `S = D − C A⁻¹ B` without the verification work, `A` on `lambda1`.
pub fn schur_only(m: &CMat, lambda1: &[usize], lambda2: &[usize]) -> Result<CMat, GreenError> {
    let a = linalg::submatrix(m, lambda1, lambda1);
    let b = linalg::submatrix(m, lambda1, lambda2);
    let cc = linalg::submatrix(m, lambda2, lambda1);
    let d = linalg::submatrix(m, lambda2, lambda2);
    let a_inv_b = linalg::lu_solve(&a, &b, SINGULAR_THRESHOLD).map_err(|f| GreenError::ASingular { min_pivot: f.min_pivot })?;
    Ok(&d - &cc * a_inv_b)
}

// ---------------------------------------------------------------------------
// Hadamard and determinant perturbation

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct HadamardReport {
    /// `(max row ℓ¹ norm)^{n−1}`.
    pub bound: f64,
    /// Largest adjugate entry, computed by cofactors for `n ≤ 8`.
    pub max_adjugate: Option<f64>,
    pub holds: bool,
}

/// Largest size for which adjugates are formed explicitly.
pub const ADJUGATE_ORACLE_MAX: usize = 8;

pub fn hadamard_adjugate_bound(m: &CMat) -> HadamardReport {
    let n = m.nrows();
    let bound = if n == 0 { 1.0 } else { linalg::max_row_sum(m).powi(n as i32 - 1) };
    let max_adjugate = (n >= 1 && n <= ADJUGATE_ORACLE_MAX).then(|| linalg::max_abs(&linalg::adjugate_cofactor(m)));
    let holds = max_adjugate.is_none_or(|a| a <= bound * (1.0 + 1e-10) + 1e-300);
    HadamardReport { bound, max_adjugate, holds }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DetPerturbation {
    /// Row-sum bound `M` of `A`.
    pub m: f64,
    /// Row-sum bound `ε` of `B`.
    pub eps: f64,
    /// `ε n² (M+ε)^{n−1}`.
    pub bound: f64,
    /// `|det(A+B) − det A|`.
    pub difference: f64,
    pub holds: bool,
}

pub fn det_perturbation_bound(a: &CMat, b: &CMat) -> Result<DetPerturbation, GreenError> {
    if a.shape() != b.shape() || a.nrows() != a.ncols() {
        return Err(GreenError::InvalidInput("A and B must be square of equal size".into()));
    }
    let n = a.nrows();
    let m = linalg::max_row_sum(a);
    let eps = linalg::max_row_sum(b);
    let bound = eps * (n * n) as f64 * (m + eps).powi(n as i32 - 1);
    let difference = (linalg::determinant(&(a + b)) - linalg::determinant(a)).norm();
    let holds = difference <= bound * (1.0 + 1e-10) + 1e-14 * linalg::determinant(a).norm().max(1e-300);
    Ok(DetPerturbation { m, eps, bound, difference, holds })
}

// ---------------------------------------------------------------------------
// Combes–Thomas

#[derive(Clone, Debug, Serialize)]
pub struct CombesThomasReport {
    pub fit: DecayFit,
    /// `𝒟 = dist(z, σ(H_Λ))`.
    pub dist_to_spectrum: f64,
    /// `S_λ' = sup_x Σ_{y≠x} |H(x,y)| e^{λ' log^ρ(1+‖x−y‖)}`.
    pub s_lambda: f64,
    pub denominator: f64,
    pub lambda: f64,
    pub c_rho: f64,
    pub certificate_budget: usize,
}

/// Verifies `|G(z)(x,y)| ≤ e^{−λ' log^ρ(1+‖x−y‖)} / (𝒟 − 2e^{λ' C(ρ) log^ρ 2} S_λ')`
/// on every pair of sites, with `C(ρ)` from the quasi-metric certificate.
pub fn combes_thomas_check(h: &CMat, sites: &[Site], z: C64, lambda: f64, rho: f64, cert: &QuasiMetricCert) -> Result<CombesThomasReport, GreenError> {
    let defect = linalg::hermitian_defect(h);
    if defect > 1e-12 * linalg::max_row_sum(h).max(1.0) {
        return Err(GreenError::NotHermitian { defect });
    }
    let n = h.nrows();
    if sites.len() != n {
        return Err(GreenError::InvalidInput("site list does not match the matrix size".into()));
    }
    let (values, _) = linalg::hermitian_eigen(h);
    let dist_to_spectrum = values.iter().map(|&l| (z - l).norm()).fold(f64::INFINITY, f64::min);
    let mut s_lambda = 0.0f64;
    for i in 0..n {
        let mut row = 0.0;
        for j in 0..n {
            if i != j {
                row += h[(i, j)].norm() * (lambda * log_rho(sites[i].dist(&sites[j]) as f64, rho)).exp();
            }
        }
        s_lambda = s_lambda.max(row);
    }
    let c_rho = cert.c_hat;
    let denominator = dist_to_spectrum - 2.0 * (lambda * c_rho * 2f64.ln().powf(rho)).exp() * s_lambda;
    if !(denominator > 0.0) {
        return Err(GreenError::DenominatorNonpositive { denominator });
    }
    let mut shifted = h.clone();
    for i in 0..n {
        shifted[(i, i)] -= z;
    }
    let (g, _, _, _) = invert_checked(&shifted)?;
    let mut pairs = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let dist = sites[i].dist(&sites[j]);
            let modulus = g[(i, j)].norm();
            let bound = (-lambda * log_rho(dist as f64, rho)).exp() / denominator;
            let pass = modulus <= bound * (1.0 + 1e-10);
            pairs.push(DecayPair { x: sites[i].clone(), y: sites[j].clone(), dist, modulus, bound, pass });
        }
    }
    let fit = DecayFit::from_pairs(pairs, lambda, rho, -1.0);
    Ok(CombesThomasReport { fit, dist_to_spectrum, s_lambda, denominator, lambda, c_rho, certificate_budget: cert.budget })
}

// ---------------------------------------------------------------------------
// Neumann series

#[derive(Clone, Debug, Serialize)]
pub struct NeumannInverse {
    #[serde(serialize_with = "serialize_matrix")]
    pub inverse: CMat,
    pub terms: usize,
    /// Power-iteration estimate of `‖D⁻¹P‖`.
    pub contraction: f64,
    /// `‖D⁻¹‖ q^K / (1 − q)` after `K` terms.
    pub remainder_bound: f64,
    /// `‖Σ − (D+P)⁻¹‖` against a direct solve.
    pub direct_difference: f64,
}

/// `(D + P)⁻¹ = Σ_i (−D⁻¹P)^i D⁻¹` truncated after `max_terms` terms.
pub fn neumann_inverse(d: &CMat, p: &CMat, max_terms: usize) -> Result<NeumannInverse, GreenError> {
    if d.shape() != p.shape() || d.nrows() != d.ncols() {
        return Err(GreenError::InvalidInput("D and P must be square of equal size".into()));
    }
    let (d_inv, _, _, _) = invert_checked(d)?;
    let k = -(&d_inv * p);
    let q = linalg::power_norm_default(&k);
    if q >= 1.0 {
        return Err(GreenError::NotContractive { norm: q });
    }
    let d_inv_norm = linalg::power_norm_default(&d_inv);
    let mut term = d_inv.clone();
    let mut sum = d_inv.clone();
    let mut terms = 1usize;
    while terms < max_terms.max(1) {
        if q == 0.0 || d_inv_norm * q.powi(terms as i32) / (1.0 - q) < 1e-18 * d_inv_norm {
            break;
        }
        term = &k * term;
        sum += &term;
        terms += 1;
    }
    let remainder_bound = if q == 0.0 { 0.0 } else { d_inv_norm * q.powi(terms as i32) / (1.0 - q) };
    let (direct, _, _, _) = invert_checked(&(d + p))?;
    let direct_difference = linalg::power_norm_default(&(&sum - direct));
    Ok(NeumannInverse { inverse: sum, terms, contraction: q, remainder_bound, direct_difference })
}

// ---------------------------------------------------------------------------
// Determinant evenness

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EvennessReport {
    pub det_plus: C64,
    pub det_minus: C64,
    /// `|det T(z) − det T(−z)| / max(1, |det T(z)|)`.
    pub defect: f64,
    pub symmetric_hopping: bool,
    /// `defect ≤ 10⁻⁸`, asserted only for symmetric hopping.
    pub holds: bool,
}

/// Compares `det T(z)` and `det T(−z)` on a site set symmetric about the origin.
pub fn determinant_evenness_check(model: &ModelSpec, sites: &[HalfPoint], z: C64, e: C64) -> Result<EvennessReport, GreenError> {
    let set: std::collections::HashSet<&HalfPoint> = sites.iter().collect();
    let parity = sites.first().map(|p| p.parity());
    for p in sites {
        if !set.contains(&p.neg()) || Some(p.parity()) != parity {
            return Err(GreenError::AsymmetricBox);
        }
    }
    let twice: Vec<Vec<i64>> = sites.iter().map(|p| p.twice().to_vec()).collect();
    let det_plus = linalg::determinant(&assemble_doubled(model, &twice, z, e)?);
    let det_minus = linalg::determinant(&assemble_doubled(model, &twice, -z, e)?);
    let defect = (det_plus - det_minus).norm() / det_plus.norm().max(1.0);
    let symmetric_hopping = model.hopping.is_symmetric();
    Ok(EvennessReport { det_plus, det_minus, defect, symmetric_hopping, holds: !symmetric_hopping || defect <= EVENNESS_TOLERANCE })
}

/// Inverse of a diagonal matrix given by its entries, for ε = 0 comparisons.
pub fn diagonal_inverse(diag: &[C64]) -> CMat {
    let n = diag.len();
    let mut m = CMat::zeros(n, n);
    for (i, d) in diag.iter().enumerate() {
        m[(i, i)] = c(1.0, 0.0) / d;
    }
    m
}
