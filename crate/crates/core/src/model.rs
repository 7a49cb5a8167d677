//! The operator family `H(θ) = εW_φ + v(θ + n·ω)δ_{n,n'}` on `Z^d` and its
//! finite-volume restrictions `T_Λ(E;θ) = H_Λ(θ) − E` as dense matrices.

use std::fmt;
use std::io::{self, Write};
use std::sync::Arc;

use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::lattice::{GeometryError, HalfPoint, LatticeBox, Site};
use crate::linalg::{self, c, CMat, C64};

/// Default cap on the number of sites of a dense restriction.
pub const DEFAULT_DENSE_CAP: usize = 4096;
/// Default smallness threshold for the coupling.
pub const DEFAULT_EPSILON0: f64 = 1e-2;
/// Tolerance on `|φ(n)|` against its decay envelope.
pub const HOPPING_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("|Im z| = {im} exceeds the strip half-width {strip}")]
    OutOfStrip { im: f64, strip: f64 },
    #[error("Morse ratio degenerates to 0 at z1 = {z1}, z2 = {z2}")]
    DegenerateRatio { z1: C64, z2: C64 },
    #[error("Diophantine condition fails at n = {n:?}: ‖n·ω‖ = {distance:e} < γ/‖n‖^τ = {bound:e}")]
    Violation { n: Vec<i64>, distance: f64, bound: f64 },
    #[error("|φ({n:?})| = {modulus:e} exceeds e^(-α log^ρ(1+‖n‖)) = {bound:e}")]
    DecayViolation { n: Vec<i64>, modulus: f64, bound: f64 },
    #[error("hopping at the origin must vanish, got {0}")]
    NonzeroOrigin(C64),
    #[error("hopping is flagged Hermitian but φ(-n) != conj φ(n) at n = {0:?}")]
    HermitianFlag(Vec<i64>),
    #[error("box has {sites} sites, above the dense cap {cap}")]
    BoxTooLarge { sites: usize, cap: usize },
    #[error("restriction is not Hermitian (defect {defect:e})")]
    NotHermitian { defect: f64 },
    #[error("no preimage of E = {0} under the potential")]
    NoPreimage(C64),
    #[error("invalid model: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

// ---------------------------------------------------------------------------
// Torus norm

/// Distance of a real number to the nearest integer.
pub fn torus_dist(x: f64) -> f64 {
    (x - x.round()).abs()
}

/// `‖z‖_T = sqrt(‖Re z‖_T² + |Im z|²)`.
pub fn torus_norm(z: C64) -> f64 {
    torus_dist(z.re).hypot(z.im)
}

/// Reduces the real part into `[0, 1)`.
pub fn reduce_phase(z: C64) -> C64 {
    c(z.re - z.re.floor(), z.im)
}

// ---------------------------------------------------------------------------
// Potential

/// User-supplied analytic potential.
#[derive(Clone)]
pub struct CustomPotential {
    pub name: String,
    pub eval: Arc<dyn Fn(C64) -> C64 + Send + Sync>,
}

impl fmt::Debug for CustomPotential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CustomPotential({})", self.name)
    }
}

#[derive(Clone, Debug)]
pub enum PotentialKind {
    /// `v(z) = cos 2πz`.
    Cosine,
    /// `v ≡ 0`; fails the Morse condition, useful as a control.
    Zero,
    Custom(CustomPotential),
}

impl PotentialKind {
    pub fn name(&self) -> &str {
        match self {
            PotentialKind::Cosine => "cosine",
            PotentialKind::Zero => "zero",
            PotentialKind::Custom(p) => &p.name,
        }
    }
}

impl Serialize for PotentialKind {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PotentialSpec {
    pub kind: PotentialKind,
    /// Strip half-width `R`.
    pub strip: f64,
    pub kappa1: f64,
    pub kappa2: f64,
    /// Range `[a, b]` of `v` on the real torus.
    pub a: f64,
    pub b: f64,
    /// Spectral margin `β`.
    pub beta: f64,
    /// `|v|_R`, the sup of `|v|` on the strip.
    pub sup_norm: f64,
}

impl PotentialSpec {
    /// Cosine potential with strip half-width `R = 1/2` and margin `β = 0.1`.
    pub fn cosine() -> Self {
        Self::cosine_with(0.5, 0.1)
    }

    pub fn cosine_with(strip: f64, beta: f64) -> Self {
        PotentialSpec {
            kind: PotentialKind::Cosine,
            strip,
            kappa1: 8.0,
            kappa2: 2.0 * std::f64::consts::PI.powi(2),
            a: -1.0,
            b: 1.0,
            beta,
            sup_norm: (2.0 * std::f64::consts::PI * strip).cosh(),
        }
    }

    pub fn zero() -> Self {
        PotentialSpec { kind: PotentialKind::Zero, a: 0.0, b: 0.0, sup_norm: 0.0, ..Self::cosine() }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let ok = self.kappa1 > 0.0 && self.kappa2 >= self.kappa1 && self.strip > 0.0 && self.beta > 0.0 && self.a <= self.b;
        if ok {
            Ok(())
        } else {
            Err(ModelError::InvalidSpec(format!(
                "potential needs κ₁ > 0, κ₂ ≥ κ₁, R > 0, β > 0, a ≤ b (got κ₁={}, κ₂={}, R={}, β={}, a={}, b={})",
                self.kappa1, self.kappa2, self.strip, self.beta, self.a, self.b
            )))
        }
    }

    /// `v(z)` without the strip check.
    pub fn value(&self, z: C64) -> C64 {
        match &self.kind {
            PotentialKind::Cosine => (z * (2.0 * std::f64::consts::PI)).cos(),
            PotentialKind::Zero => c(0.0, 0.0),
            PotentialKind::Custom(p) => (p.eval)(z),
        }
    }

    /// `v'(z)`, exact for the built-in kinds and by central differences otherwise.
    pub fn derivative(&self, z: C64) -> C64 {
        let tau = 2.0 * std::f64::consts::PI;
        match &self.kind {
            PotentialKind::Cosine => -(z * tau).sin() * tau,
            PotentialKind::Zero => c(0.0, 0.0),
            PotentialKind::Custom(p) => {
                let h = 1e-6;
                ((p.eval)(z + h) - (p.eval)(z - h)) / (2.0 * h)
            }
        }
    }

    /// Real interval `[a − β, b + β]` that must contain the spectrum.
    pub fn spectral_window(&self) -> (f64, f64) {
        (self.a - self.beta, self.b + self.beta)
    }
}

/// `v(z)` with the strip precondition `|Im z| ≤ R`.
pub fn eval_potential(spec: &PotentialSpec, z: C64) -> Result<C64, ModelError> {
    if z.im.abs() > spec.strip * (1.0 + 1e-12) {
        return Err(ModelError::OutOfStrip { im: z.im, strip: spec.strip });
    }
    Ok(spec.value(z))
}

/// A preimage `θ₀` with `v(θ₀) = E`.
///
/// The cosine branch returns `arccos(E)/2π`, whose real part lies in `[0, 1/2]`.
pub fn potential_preimage(spec: &PotentialSpec, e: C64) -> Result<C64, ModelError> {
    let theta0 = match &spec.kind {
        PotentialKind::Cosine => e.acos() / (2.0 * std::f64::consts::PI),
        PotentialKind::Zero => return Err(ModelError::NoPreimage(e)),
        PotentialKind::Custom(_) => {
            let mut best: Option<C64> = None;
            for j in 0..64 {
                let mut z = c(j as f64 / 64.0, 0.0);
                for _ in 0..60 {
                    let f = spec.value(z) - e;
                    let d = spec.derivative(z);
                    if d.norm() < 1e-300 {
                        break;
                    }
                    z -= f / d;
                    if f.norm() < 1e-15 {
                        break;
                    }
                }
                if (spec.value(z) - e).norm() < 1e-10 && z.im.abs() <= spec.strip {
                    let z = reduce_phase(z);
                    if best.is_none_or(|b| (z.im.abs(), z.re) < (b.im.abs(), b.re)) {
                        best = Some(z);
                    }
                }
            }
            best.ok_or(ModelError::NoPreimage(e))?
        }
    };
    if theta0.im.abs() > spec.strip {
        return Err(ModelError::OutOfStrip { im: theta0.im, strip: spec.strip });
    }
    Ok(theta0)
}

/// Empirical Morse constants on a grid of the strip.
#[derive(Clone, Debug, Serialize)]
pub struct MorseCertificate {
    pub grid_density: usize,
    pub strip: f64,
    pub kappa1: f64,
    pub kappa2: f64,
    pub pairs_checked: usize,
    pub argmin: (C64, C64),
    pub argmax: (C64, C64),
}

/// Minimizes and maximizes `|v(z₁)−v(z₂)| / (‖z₁−z₂‖_T‖z₁+z₂‖_T)` over all grid pairs.
pub fn certify_morse(spec: &PotentialSpec, grid_density: usize, strip: f64) -> Result<MorseCertificate, ModelError> {
    if grid_density < 16 {
        return Err(ModelError::InvalidSpec(format!("grid density must be at least 16, got {grid_density}")));
    }
    if strip > spec.strip || strip < 0.0 {
        return Err(ModelError::OutOfStrip { im: strip, strip: spec.strip });
    }
    let h = 1.0 / grid_density as f64;
    let ny = (2.0 * strip * grid_density as f64).floor() as usize;
    let mut points = Vec::with_capacity(grid_density * (ny + 1));
    for iy in 0..=ny {
        let y = if ny == 0 { 0.0 } else { -strip + iy as f64 * h };
        for ix in 0..grid_density {
            points.push(c(ix as f64 * h, y));
        }
    }
    let values: Vec<C64> = points.iter().map(|&z| spec.value(z)).collect();
    let mut kappa1 = f64::INFINITY;
    let mut kappa2 = 0.0f64;
    let mut argmin = (points[0], points[0]);
    let mut argmax = (points[0], points[0]);
    let mut pairs = 0usize;
    for i in 0..points.len() {
        for j in (i + 1)..points.len() {
            let den = torus_norm(points[i] - points[j]) * torus_norm(points[i] + points[j]);
            if den < 1e-14 {
                continue;
            }
            pairs += 1;
            let num = (values[i] - values[j]).norm();
            let ratio = num / den;
            if ratio <= 1e-14 {
                return Err(ModelError::DegenerateRatio { z1: points[i], z2: points[j] });
            }
            if ratio < kappa1 {
                kappa1 = ratio;
                argmin = (points[i], points[j]);
            }
            if ratio > kappa2 {
                kappa2 = ratio;
                argmax = (points[i], points[j]);
            }
        }
    }
    Ok(MorseCertificate { grid_density, strip, kappa1, kappa2, pairs_checked: pairs, argmin, argmax })
}

// ---------------------------------------------------------------------------
// Frequency

#[derive(Clone, Debug, Serialize)]
pub struct FrequencyVector {
    pub omega: Vec<f64>,
    pub tau: f64,
    pub gamma: f64,
    /// Largest `‖n‖` exhaustively certified; zero when uncertified.
    pub n_cert: u64,
}

impl FrequencyVector {
    pub fn uncertified(omega: Vec<f64>, tau: f64, gamma: f64) -> Self {
        FrequencyVector { omega, tau, gamma, n_cert: 0 }
    }

    /// Golden mean `(√5 − 1)/2` with `τ = 2`, `γ = 0.2`.
    pub fn golden() -> Self {
        Self::uncertified(vec![(5f64.sqrt() - 1.0) / 2.0], 2.0, 0.2)
    }

    pub fn certify(mut self, n_max: u64) -> Result<Self, ModelError> {
        certify_diophantine(&self.omega, self.tau, self.gamma, n_max)?;
        self.n_cert = n_max;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.omega.len()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct DiophantineCertificate {
    pub n_max: u64,
    pub checked: u64,
    /// Minimizer of `‖n·ω‖‖n‖^τ/γ`; a value ≥ 1 means the condition holds there.
    pub worst_n: Vec<i64>,
    pub worst_margin: f64,
}

/// Exhaustive check of `‖n·ω‖_T ≥ γ/‖n‖^τ` for `0 < ‖n‖ ≤ N_max`.
///
/// Only one of `±n` is visited. On failure the offending `n` of smallest norm
/// (lexicographically first among those) is reported.
pub fn certify_diophantine(omega: &[f64], tau: f64, gamma: f64, n_max: u64) -> Result<DiophantineCertificate, ModelError> {
    let d = omega.len();
    if d == 0 || n_max < 1 {
        return Err(ModelError::InvalidSpec("certify_diophantine needs d ≥ 1 and N_max ≥ 1".into()));
    }
    let nm = n_max as i64;
    let ranges: Vec<(i64, i64)> = (0..d).map(|i| if i == 0 { (0, nm) } else { (-nm, nm) }).collect();
    let mut cur: Vec<i64> = ranges.iter().map(|r| r.0).collect();
    let mut checked = 0u64;
    let mut worst: Option<(f64, Vec<i64>)> = None;
    let mut first_bad: Option<(i64, Vec<i64>, f64, f64)> = None;
    'outer: loop {
        // half-space: first nonzero coordinate positive
        if cur.iter().find(|&&x| x != 0).is_some_and(|&l| l > 0) {
            let norm = cur.iter().map(|x| x.abs()).max().unwrap_or(0);
            let dot: f64 = cur.iter().zip(omega).map(|(&n, &w)| n as f64 * w).sum();
            let dist = torus_dist(dot);
            let bound = gamma / (norm as f64).powf(tau);
            let margin = dist / bound;
            checked += 1;
            if worst.as_ref().is_none_or(|(m, _)| margin < *m) {
                worst = Some((margin, cur.clone()));
            }
            if dist < bound && first_bad.as_ref().is_none_or(|(bn, bv, _, _)| (norm, &cur) < (*bn, bv)) {
                first_bad = Some((norm, cur.clone(), dist, bound));
            }
        }
        for axis in (0..d).rev() {
            if cur[axis] < ranges[axis].1 {
                cur[axis] += 1;
                continue 'outer;
            }
            cur[axis] = ranges[axis].0;
        }
        break;
    }
    if let Some((_, n, distance, bound)) = first_bad {
        return Err(ModelError::Violation { n, distance, bound });
    }
    let (worst_margin, worst_n) = worst.unwrap_or((f64::INFINITY, vec![0; d]));
    Ok(DiophantineCertificate { n_max, checked, worst_n, worst_margin })
}

// ---------------------------------------------------------------------------
// Hopping

#[derive(Clone)]
pub struct CustomHopping {
    pub name: String,
    pub eval: Arc<dyn Fn(&[i64]) -> C64 + Send + Sync>,
}

impl fmt::Debug for CustomHopping {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CustomHopping({})", self.name)
    }
}

#[derive(Clone, Debug)]
pub enum HoppingProfile {
    /// `φ(n) = scale · e^{−α log^ρ(1+‖n‖)}`, real and symmetric.
    Saturating { scale: f64 },
    /// `φ(n) = scale · e^{−α log^ρ(1+‖n‖)} · e^{2πi t·n}`, Hermitian but not symmetric.
    Twisted { scale: f64, twist: Vec<f64> },
    Custom(CustomHopping),
}

impl Serialize for HoppingProfile {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            HoppingProfile::Saturating { scale } => s.serialize_str(&format!("saturating({scale})")),
            HoppingProfile::Twisted { scale, twist } => s.serialize_str(&format!("twisted({scale}; {twist:?})")),
            HoppingProfile::Custom(h) => s.serialize_str(&h.name),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct HoppingKernel {
    pub alpha: f64,
    pub rho: f64,
    pub profile: HoppingProfile,
    pub hermitian: bool,
}

impl HoppingKernel {
    pub fn saturating(alpha: f64, rho: f64) -> Self {
        HoppingKernel { alpha, rho, profile: HoppingProfile::Saturating { scale: 1.0 }, hermitian: true }
    }

    /// Decay envelope `e^{−α log^ρ(1+‖n‖)}`.
    pub fn envelope(&self, norm: i64) -> f64 {
        (-self.alpha * (norm as f64).ln_1p().powf(self.rho)).exp()
    }

    /// `φ(n)` without checks.
    pub fn raw(&self, n: &[i64]) -> C64 {
        let norm = n.iter().map(|x| x.abs()).max().unwrap_or(0);
        if norm == 0 {
            return match &self.profile {
                HoppingProfile::Custom(h) => (h.eval)(n),
                _ => c(0.0, 0.0),
            };
        }
        match &self.profile {
            HoppingProfile::Saturating { scale } => c(scale * self.envelope(norm), 0.0),
            HoppingProfile::Twisted { scale, twist } => {
                let phase: f64 = n.iter().zip(twist).map(|(&k, &t)| k as f64 * t).sum();
                C64::from_polar(scale * self.envelope(norm), 2.0 * std::f64::consts::PI * phase)
            }
            HoppingProfile::Custom(h) => (h.eval)(n),
        }
    }

    /// Whether `φ(−n) = φ(n)` holds by construction.
    pub fn is_symmetric(&self) -> bool {
        match &self.profile {
            HoppingProfile::Saturating { .. } => true,
            HoppingProfile::Twisted { twist, .. } => twist.iter().all(|&t| t == 0.0),
            HoppingProfile::Custom(_) => false,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.alpha > 0.0) || !(self.rho > 1.0) {
            return Err(ModelError::InvalidSpec(format!("hopping needs α > 0 and ρ > 1 (got α={}, ρ={})", self.alpha, self.rho)));
        }
        Ok(())
    }

    /// Checks the envelope, `φ(0) = 0` and the Hermitian flag on `Λ_radius(0)`.
    pub fn check_on_box(&self, d: usize, radius: i64) -> Result<(), ModelError> {
        let b = crate::lattice::box_around(&HalfPoint::origin(d), radius as f64)?;
        for s in &b.sites {
            let w = hopping_weight(self, &s.0)?;
            if self.hermitian {
                let m = self.raw(&s.neg().0);
                if (m - w.conj()).norm() > HOPPING_TOLERANCE {
                    return Err(ModelError::HermitianFlag(s.0.clone()));
                }
            }
        }
        Ok(())
    }
}

/// `φ(n)`, checked against the decay envelope within `10⁻¹²`.
pub fn hopping_weight(kernel: &HoppingKernel, n: &[i64]) -> Result<C64, ModelError> {
    let w = kernel.raw(n);
    let norm = n.iter().map(|x| x.abs()).max().unwrap_or(0);
    if norm == 0 {
        if w.norm() != 0.0 {
            return Err(ModelError::NonzeroOrigin(w));
        }
        return Ok(w);
    }
    let bound = kernel.envelope(norm);
    if w.norm() > bound + HOPPING_TOLERANCE {
        return Err(ModelError::DecayViolation { n: n.to_vec(), modulus: w.norm(), bound });
    }
    Ok(w)
}

// ---------------------------------------------------------------------------
// Model

#[derive(Clone, Debug, Serialize)]
pub struct ModelSpec {
    pub potential: PotentialSpec,
    pub hopping: HoppingKernel,
    pub frequency: FrequencyVector,
    pub epsilon: f64,
    pub epsilon0: f64,
    pub dim: usize,
    pub rho_prime: f64,
    pub dense_cap: usize,
}

impl ModelSpec {
    /// One-dimensional cosine model with golden-mean frequency, saturating
    /// hopping `α = 1`, `ρ = 2` and `ρ' = 1.5`.
    pub fn golden_cosine(epsilon: f64) -> Self {
        ModelSpec {
            potential: PotentialSpec::cosine(),
            hopping: HoppingKernel::saturating(1.0, 2.0),
            frequency: FrequencyVector::golden(),
            epsilon,
            epsilon0: DEFAULT_EPSILON0,
            dim: 1,
            rho_prime: 1.5,
            dense_cap: DEFAULT_DENSE_CAP,
        }
    }

    pub fn alpha(&self) -> f64 {
        self.hopping.alpha
    }

    pub fn rho(&self) -> f64 {
        self.hopping.rho
    }

    /// Validates the hypotheses; returns advisory warnings.
    pub fn validate(&self) -> Result<Vec<String>, ModelError> {
        self.potential.validate()?;
        self.hopping.validate()?;
        if self.frequency.dim() != self.dim {
            return Err(ModelError::InvalidSpec(format!("frequency has {} components but the dimension is {}", self.frequency.dim(), self.dim)));
        }
        let (rp, r) = (self.rho_prime, self.hopping.rho);
        if !(1.0 < rp && rp < r && r < rp + 1.0) {
            return Err(ModelError::InvalidSpec(format!("need 1 < ρ' < ρ < ρ' + 1 (got ρ'={rp}, ρ={r})")));
        }
        if !(self.frequency.tau > self.dim as f64) || !(self.frequency.gamma > 0.0) {
            return Err(ModelError::InvalidSpec(format!("need τ > d and γ > 0 (got τ={}, γ={})", self.frequency.tau, self.frequency.gamma)));
        }
        let mut warnings = Vec::new();
        if self.epsilon.abs() > self.epsilon0 {
            warnings.push(format!("|ε| = {} exceeds ε₀ = {}; the localization regime needs ε sufficiently small", self.epsilon.abs(), self.epsilon0));
        }
        if self.epsilon0 == DEFAULT_EPSILON0 {
            warnings.push("ε₀ left at its default 1e-2; no rigorous smallness threshold is known".to_string());
        }
        Ok(warnings)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EnergyPoint {
    pub e: C64,
    pub theta0: Option<C64>,
}

impl EnergyPoint {
    pub fn real(e: f64) -> Self {
        EnergyPoint { e: c(e, 0.0), theta0: None }
    }

    pub fn with_preimage(spec: &PotentialSpec, e: C64) -> Result<Self, ModelError> {
        Ok(EnergyPoint { e, theta0: Some(potential_preimage(spec, e)?) })
    }
}

/// Dense restriction of `T(E;θ)` to a finite site list.
#[derive(Clone, Debug)]
pub struct OperatorRestriction {
    /// Sites in matrix order.
    pub sites: Vec<Site>,
    pub center: Option<HalfPoint>,
    pub radius: Option<f64>,
    pub matrix: CMat,
    pub theta: C64,
    pub energy: EnergyPoint,
    pub hermitian: bool,
    pub hermitian_defect: f64,
    /// `[a − β, b + β]` of the generating potential.
    pub spectral_window: (f64, f64),
}

impl OperatorRestriction {
    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    /// `H_Λ(θ) = T + E`.
    pub fn hamiltonian(&self) -> CMat {
        let mut h = self.matrix.clone();
        for i in 0..h.nrows() {
            h[(i, i)] += self.energy.e;
        }
        h
    }

    pub fn index_of(&self, s: &Site) -> Option<usize> {
        self.sites.iter().position(|x| x == s)
    }
}

/// Matrix of `(v(z + n·ω) − E)δ + εW` on points given by doubled coordinates.
///
/// All points must lie in one coset of `Z^d` inside `(1/2)Z^d`.
pub fn assemble_doubled(model: &ModelSpec, twice: &[Vec<i64>], z: C64, e: C64) -> Result<CMat, ModelError> {
    let n = twice.len();
    if n > model.dense_cap {
        return Err(ModelError::BoxTooLarge { sites: n, cap: model.dense_cap });
    }
    if z.im.abs() > model.potential.strip * (1.0 + 1e-12) {
        return Err(ModelError::OutOfStrip { im: z.im, strip: model.potential.strip });
    }
    let omega = &model.frequency.omega;
    let mut m = CMat::zeros(n, n);
    let mut diff = vec![0i64; model.dim];
    let mut cache: std::collections::HashMap<Vec<i64>, C64> = std::collections::HashMap::new();
    for i in 0..n {
        let phase: f64 = twice[i].iter().zip(omega).map(|(&t, &w)| t as f64 * w).sum::<f64>() / 2.0;
        m[(i, i)] = model.potential.value(z + phase) - e;
        if model.epsilon == 0.0 {
            continue;
        }
        for j in 0..n {
            if i == j {
                continue;
            }
            for (k, slot) in diff.iter_mut().enumerate() {
                let t = twice[i][k] - twice[j][k];
                if t % 2 != 0 {
                    return Err(ModelError::InvalidSpec("points of one restriction must share a coset of Z^d".into()));
                }
                *slot = t / 2;
            }
            let w = match cache.get(&diff) {
                Some(w) => *w,
                None => {
                    let w = hopping_weight(&model.hopping, &diff)?;
                    cache.insert(diff.clone(), w);
                    w
                }
            };
            m[(i, j)] = w * model.epsilon;
        }
    }
    Ok(m)
}

/// Restriction of `T(E;θ)` to an explicit list of integer sites.
pub fn assemble_on_sites(model: &ModelSpec, sites: &[Site], theta: C64, energy: EnergyPoint) -> Result<OperatorRestriction, ModelError> {
    if let Some(s) = sites.iter().find(|s| s.dim() != model.dim) {
        return Err(GeometryError::DimensionMismatch { expected: model.dim, got: s.dim() }.into());
    }
    let twice: Vec<Vec<i64>> = sites.iter().map(|s| s.0.iter().map(|x| 2 * x).collect()).collect();
    let matrix = assemble_doubled(model, &twice, theta, energy.e)?;
    let defect = linalg::hermitian_defect(&matrix);
    let scale = linalg::max_row_sum(&matrix).max(1.0);
    Ok(OperatorRestriction {
        sites: sites.to_vec(),
        center: None,
        radius: None,
        hermitian: defect <= 1e-12 * scale,
        hermitian_defect: defect,
        matrix,
        theta,
        energy,
        spectral_window: model.potential.spectral_window(),
    })
}

pub fn assemble_restriction(model: &ModelSpec, bx: &LatticeBox, theta: C64, energy: EnergyPoint) -> Result<OperatorRestriction, ModelError> {
    if bx.len() > model.dense_cap {
        return Err(ModelError::BoxTooLarge { sites: bx.len(), cap: model.dense_cap });
    }
    let mut r = assemble_on_sites(model, &bx.sites, theta, energy)?;
    r.center = Some(bx.center.clone());
    r.radius = Some(bx.radius);
    Ok(r)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SpectrumBounds {
    pub min: f64,
    pub max: f64,
    pub window: (f64, f64),
    /// Distance from the extremes to the window edges; negative when the spectrum escapes.
    pub margin: f64,
    pub contained: bool,
}

/// Extremal eigenvalues of `H_Λ(θ)` and their position in `[a − β, b + β]`.
pub fn spectrum_bounds(r: &OperatorRestriction) -> Result<SpectrumBounds, ModelError> {
    if !r.hermitian {
        return Err(ModelError::NotHermitian { defect: r.hermitian_defect });
    }
    let h = r.hamiltonian();
    let (values, _) = linalg::hermitian_eigen(&h);
    let min = values.first().copied().unwrap_or(0.0);
    let max = values.last().copied().unwrap_or(0.0);
    let (lo, hi) = r.spectral_window;
    let margin = (min - lo).min(hi - max);
    Ok(SpectrumBounds { min, max, window: (lo, hi), margin, contained: margin >= 0.0 })
}

/// Writes the matrix as CSV rows `row_site,col_site,re,im`.
pub fn write_matrix_csv<W: Write>(r: &OperatorRestriction, mut w: W) -> io::Result<()> {
    writeln!(w, "row_site,col_site,re,im")?;
    for (i, si) in r.sites.iter().enumerate() {
        for (j, sj) in r.sites.iter().enumerate() {
            let z = r.matrix[(i, j)];
            writeln!(w, "{},{},{},{}", si.label(), sj.label(), z.re, z.im)?;
        }
    }
    Ok(())
}
