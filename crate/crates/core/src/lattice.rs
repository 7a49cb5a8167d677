//! Lattice geometry: sites, half-lattice points, boxes `Λ_L(c)`, the kernel
//! sum `D(η)`, the quasi-metric and extract inequalities, and the regular
//! deformation that closes a site set under absorption of enlarged blocks.
//!
//! Distances are sup-norm distances throughout.

use std::collections::{BTreeSet, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::ser::SerializeSeq;
use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

/// Default upper bound on the number of sites enumerated by [`box_around`].
pub const DEFAULT_SITE_CAP: usize = 1 << 22;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("box would contain {sites} sites, above the cap of {cap}")]
    SizeOverflow { sites: f64, cap: usize },
    #[error("tail bound {tail:e} exceeds the partial sum {value:e}; raise K")]
    TailNotSmall { value: f64, tail: f64 },
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),
    #[error("inequality violated: {0}")]
    InequalityViolated(String),
    #[error("deformation did not converge within {iterations} sweeps")]
    NonConvergence { iterations: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// A point of `Z^d`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Site(pub Vec<i64>);

impl Site {
    pub fn new(coords: Vec<i64>) -> Self {
        Site(coords)
    }

    pub fn origin(d: usize) -> Self {
        Site(vec![0; d])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// Sup norm `‖n‖`.
    pub fn norm(&self) -> i64 {
        self.0.iter().map(|x| x.abs()).max().unwrap_or(0)
    }

    pub fn dist(&self, other: &Site) -> i64 {
        self.0.iter().zip(&other.0).map(|(a, b)| (a - b).abs()).max().unwrap_or(0)
    }

    pub fn sub(&self, other: &Site) -> Site {
        Site(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    pub fn add(&self, other: &Site) -> Site {
        Site(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn neg(&self) -> Site {
        Site(self.0.iter().map(|a| -a).collect())
    }

    /// `n·ω`.
    pub fn dot(&self, omega: &[f64]) -> f64 {
        self.0.iter().zip(omega).map(|(&n, &w)| n as f64 * w).sum()
    }

    /// Compact text form used in CSV files: coordinates joined by `;`.
    pub fn label(&self) -> String {
        self.0.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";")
    }
}

impl From<Vec<i64>> for Site {
    fn from(v: Vec<i64>) -> Self {
        Site(v)
    }
}

/// A point of `(1/2)Z^d`, stored exactly as twice its coordinates.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct HalfPoint {
    twice: Vec<i64>,
}

impl HalfPoint {
    pub fn from_twice(twice: Vec<i64>) -> Self {
        HalfPoint { twice }
    }

    pub fn origin(d: usize) -> Self {
        HalfPoint { twice: vec![0; d] }
    }

    pub fn from_site(s: &Site) -> Self {
        HalfPoint { twice: s.0.iter().map(|x| 2 * x).collect() }
    }

    /// Midpoint of two sites, `(a+b)/2`.
    pub fn midpoint(a: &Site, b: &Site) -> Self {
        HalfPoint { twice: a.0.iter().zip(&b.0).map(|(x, y)| x + y).collect() }
    }

    pub fn twice(&self) -> &[i64] {
        &self.twice
    }

    pub fn dim(&self) -> usize {
        self.twice.len()
    }

    pub fn is_integer(&self) -> bool {
        self.twice.iter().all(|t| t % 2 == 0)
    }

    pub fn to_site(&self) -> Option<Site> {
        self.is_integer().then(|| Site(self.twice.iter().map(|t| t / 2).collect()))
    }

    pub fn coords(&self) -> Vec<f64> {
        self.twice.iter().map(|&t| t as f64 / 2.0).collect()
    }

    /// `k·ω`.
    pub fn dot(&self, omega: &[f64]) -> f64 {
        self.twice.iter().zip(omega).map(|(&t, &w)| t as f64 * w).sum::<f64>() / 2.0
    }

    pub fn neg(&self) -> Self {
        HalfPoint { twice: self.twice.iter().map(|t| -t).collect() }
    }

    pub fn add_site(&self, s: &Site) -> Self {
        HalfPoint { twice: self.twice.iter().zip(&s.0).map(|(t, x)| t + 2 * x).collect() }
    }

    pub fn add(&self, other: &HalfPoint) -> Self {
        HalfPoint { twice: self.twice.iter().zip(&other.twice).map(|(a, b)| a + b).collect() }
    }

    pub fn sub(&self, other: &HalfPoint) -> Self {
        HalfPoint { twice: self.twice.iter().zip(&other.twice).map(|(a, b)| a - b).collect() }
    }

    /// Twice the sup distance to a site.
    pub fn twice_dist_to(&self, s: &Site) -> i64 {
        self.twice.iter().zip(&s.0).map(|(t, x)| (2 * x - t).abs()).max().unwrap_or(0)
    }

    pub fn dist_to(&self, s: &Site) -> f64 {
        self.twice_dist_to(s) as f64 / 2.0
    }

    /// Twice the sup norm.
    pub fn twice_norm(&self) -> i64 {
        self.twice.iter().map(|t| t.abs()).max().unwrap_or(0)
    }

    /// Coset label `t mod 2` per coordinate.
    pub fn parity(&self) -> Vec<i64> {
        self.twice.iter().map(|t| t.rem_euclid(2)).collect()
    }

    /// Integer site `s − self` when it lies in `Z^d`, for relative offsets.
    pub fn offset_of(&self, s: &Site) -> HalfPoint {
        HalfPoint { twice: self.twice.iter().zip(&s.0).map(|(t, x)| 2 * x - t).collect() }
    }
}

impl Serialize for HalfPoint {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut seq = serializer.serialize_seq(Some(self.twice.len()))?;
        for t in &self.twice {
            seq.serialize_element(&[*t, 2])?;
        }
        seq.end()
    }
}

impl<'de> Deserialize<'de> for HalfPoint {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let pairs: Vec<[i64; 2]> = Vec::deserialize(deserializer)?;
        let mut twice = Vec::with_capacity(pairs.len());
        for [num, den] in pairs {
            match den {
                1 => twice.push(2 * num),
                2 => twice.push(num),
                _ => return Err(serde::de::Error::custom("half-lattice denominators must be 1 or 2")),
            }
        }
        Ok(HalfPoint { twice })
    }
}

/// Sorted set of lattice sites.
pub type SiteSet = BTreeSet<Site>;

/// `Λ_L(center) = {k ∈ Z^d : ‖k − center‖ ≤ L}` with its explicit site list.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LatticeBox {
    pub center: HalfPoint,
    pub radius: f64,
    /// Sites in lexicographic order.
    pub sites: Vec<Site>,
}

impl LatticeBox {
    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.center.dim()
    }

    pub fn index_of(&self, s: &Site) -> Option<usize> {
        self.sites.binary_search(s).ok()
    }

    pub fn contains(&self, s: &Site) -> bool {
        self.index_of(s).is_some()
    }

    pub fn to_set(&self) -> SiteSet {
        self.sites.iter().cloned().collect()
    }

    pub fn diam(&self) -> i64 {
        sup_diam(self.sites.iter())
    }
}

/// Integer range `{m : |2m − t| ≤ 2L}`.
fn axis_range(t: i64, radius: f64) -> (i64, i64) {
    let two_l = 2.0 * radius;
    let inside = |m: i64| ((2 * m - t).abs() as f64) <= two_l;
    let mut lo = ((t as f64 - two_l) / 2.0).ceil() as i64 - 1;
    let mut hi = ((t as f64 + two_l) / 2.0).floor() as i64 + 1;
    while lo <= hi && !inside(lo) {
        lo += 1;
    }
    while hi >= lo && !inside(hi) {
        hi -= 1;
    }
    (lo, hi)
}

pub fn box_around(center: &HalfPoint, radius: f64) -> Result<LatticeBox, GeometryError> {
    box_around_capped(center, radius, DEFAULT_SITE_CAP)
}

/// Enumerates `Λ_L(center)` exactly, refusing boxes above `cap` sites.
pub fn box_around_capped(center: &HalfPoint, radius: f64, cap: usize) -> Result<LatticeBox, GeometryError> {
    if !(radius >= 0.0) || !radius.is_finite() {
        return Err(GeometryError::PreconditionViolated(format!("radius must be finite and nonnegative, got {radius}")));
    }
    let ranges: Vec<(i64, i64)> = center.twice().iter().map(|&t| axis_range(t, radius)).collect();
    let count: f64 = ranges.iter().map(|(lo, hi)| (hi - lo + 1).max(0) as f64).product();
    if count > cap as f64 {
        return Err(GeometryError::SizeOverflow { sites: count, cap });
    }
    let mut sites = Vec::with_capacity(count as usize);
    if ranges.iter().all(|(lo, hi)| hi >= lo) {
        let mut cur: Vec<i64> = ranges.iter().map(|r| r.0).collect();
        'outer: loop {
            sites.push(Site(cur.clone()));
            for axis in (0..cur.len()).rev() {
                if cur[axis] < ranges[axis].1 {
                    cur[axis] += 1;
                    continue 'outer;
                }
                cur[axis] = ranges[axis].0;
            }
            break;
        }
    }
    Ok(LatticeBox { center: center.clone(), radius, sites })
}

/// Sup-norm diameter of a set of sites, `max_i (max x_i − min x_i)`.
pub fn sup_diam<'a>(sites: impl IntoIterator<Item = &'a Site>) -> i64 {
    let mut lo: Vec<i64> = Vec::new();
    let mut hi: Vec<i64> = Vec::new();
    for s in sites {
        if lo.is_empty() {
            lo = s.0.clone();
            hi = s.0.clone();
            continue;
        }
        for (i, &x) in s.0.iter().enumerate() {
            lo[i] = lo[i].min(x);
            hi[i] = hi[i].max(x);
        }
    }
    lo.iter().zip(&hi).map(|(a, b)| b - a).max().unwrap_or(0)
}

/// Minimum sup distance between two site sets, `None` if either is empty.
pub fn set_dist<'a, 'b>(a: impl IntoIterator<Item = &'a Site>, b: impl IntoIterator<Item = &'b Site> + Clone) -> Option<i64> {
    let mut best: Option<i64> = None;
    for x in a {
        for y in b.clone() {
            let d = x.dist(y);
            if best.is_none_or(|cur| d < cur) {
                best = Some(d);
            }
        }
    }
    best
}

/// `Λ_pad(B) = {x : dist(x, B) ≤ pad}`.
pub fn neighborhood(set: &SiteSet, pad: i64) -> SiteSet {
    let mut out = SiteSet::new();
    for s in set {
        let b = box_around(&HalfPoint::from_site(s), pad as f64).expect("neighborhood box");
        out.extend(b.sites);
    }
    out
}

/// `log^ρ(1+x)` for `x ≥ 0`.
pub fn log_rho(x: f64, rho: f64) -> f64 {
    x.ln_1p().powf(rho)
}

// ---------------------------------------------------------------------------
// Kernel sum D(η)

/// Truncated `D(η) = Σ_k e^{−η log^ρ(1+‖k‖)}` with a tail bound.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KernelSum {
    pub eta: f64,
    pub rho: f64,
    pub dim: usize,
    pub truncation: u64,
    pub value: f64,
    pub tail_bound: f64,
}

/// Number of sites of `Z^d` at sup norm exactly `m`.
pub fn shell_count(m: u64, d: usize) -> f64 {
    if m == 0 {
        return 1.0;
    }
    let outer = (2.0 * m as f64 + 1.0).powi(d as i32);
    let inner = (2.0 * m as f64 - 1.0).powi(d as i32);
    outer - inner
}

/// Tail bound `Σ_{m>K} shell(m) e^{−η log^ρ(1+m)}`.
///
/// With `L = log(1+u)` the shells are dominated by `d 2^d e^{(d−1)L}`, so the
/// tail is at most `d 2^d ∫_{L_K}^∞ e^{φ(L)} dL` with `φ(L) = dL − ηL^ρ`. The
/// exponent is concave, hence the integral is at most `e^{φ(L_K)}/|φ'(L_K)|`
/// once `φ'(L_K) < 0`; otherwise the bound is infinite.
pub fn kernel_tail_bound(eta: f64, rho: f64, d: usize, k: u64) -> f64 {
    let l = (k as f64).ln_1p();
    let df = d as f64;
    let slope = df - eta * rho * l.powf(rho - 1.0);
    if slope >= 0.0 {
        return f64::INFINITY;
    }
    let phi = df * l - eta * l.powf(rho);
    df * 2f64.powi(d as i32) * phi.exp() / (-slope)
}

pub fn kernel_sum(eta: f64, rho: f64, d: usize, k: u64) -> Result<KernelSum, GeometryError> {
    if !(eta > 0.0) || !(rho > 1.0) || k < 1 || d == 0 {
        return Err(GeometryError::PreconditionViolated(format!(
            "kernel_sum needs η > 0, ρ > 1, K ≥ 1, d ≥ 1 (got η={eta}, ρ={rho}, K={k}, d={d})"
        )));
    }
    let mut value = 0.0;
    for m in 0..=k {
        value += shell_count(m, d) * (-eta * log_rho(m as f64, rho)).exp();
    }
    let tail_bound = kernel_tail_bound(eta, rho, d, k);
    if tail_bound > value {
        return Err(GeometryError::TailNotSmall { value, tail: tail_bound });
    }
    Ok(KernelSum { eta, rho, dim: d, truncation: k, value, tail_bound })
}

// ---------------------------------------------------------------------------
// Quasi-metric certificate

/// Empirical constant `Ĉ` with
/// `log^ρ(1+Σxᵢ) ≤ Σ log^ρ(1+xᵢ) + Ĉ log^ρ n` on every tested tuple.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QuasiMetricCert {
    pub rho: f64,
    pub n_max: usize,
    pub budget: usize,
    pub seed: u64,
    pub c_hat: f64,
    pub worst_config: Vec<f64>,
    pub evaluations: usize,
}

impl QuasiMetricCert {
    /// Checks one tuple against the certificate, with a relative slack for rounding.
    pub fn admits(&self, xs: &[f64]) -> bool {
        let n = xs.len();
        if n <= 1 {
            return true;
        }
        let lhs = log_rho(xs.iter().sum(), self.rho);
        let rhs = xs.iter().map(|&x| log_rho(x, self.rho)).sum::<f64>() + self.c_hat * log_rho_int(n, self.rho);
        lhs <= rhs + 1e-12 * lhs.abs().max(1.0)
    }
}

/// `log^ρ n` for an integer count.
fn log_rho_int(n: usize, rho: f64) -> f64 {
    (n as f64).ln().powf(rho)
}

/// Normalized defect of a tuple; zero for single summands.
pub fn quasi_metric_defect(xs: &[f64], rho: f64) -> f64 {
    let n = xs.len();
    if n <= 1 {
        return 0.0;
    }
    let lhs = log_rho(xs.iter().sum(), rho);
    let rhs: f64 = xs.iter().map(|&x| log_rho(x, rho)).sum();
    (lhs - rhs) / log_rho_int(n, rho)
}

/// Defect of `k` copies of `x` and `n − k` copies of `y`.
fn two_value_defect(n: usize, k: usize, x: f64, y: f64, rho: f64) -> f64 {
    let kf = k as f64;
    let rest = (n - k) as f64;
    let lhs = log_rho(kf * x + rest * y, rho);
    let rhs = kf * log_rho(x, rho) + rest * log_rho(y, rho);
    (lhs - rhs) / log_rho_int(n, rho)
}

/// Searches for the largest quasi-metric defect.
///
/// Stationary points of the defect take at most two distinct values, so the
/// structured phase scans two-value tuples on a logarithmic grid for every
/// `n ≤ n_max` and refines the best one per `n` by a pattern search. The
/// random phase then spends `budget` samples on log-uniform tuples.
pub fn quasi_metric_certify(rho: f64, n_max: usize, budget: usize, seed: u64) -> Result<QuasiMetricCert, GeometryError> {
    if !(rho > 1.0) || n_max < 2 {
        return Err(GeometryError::PreconditionViolated(format!("quasi_metric_certify needs ρ > 1 and n_max ≥ 2 (got ρ={rho}, n_max={n_max})")));
    }
    let grid: Vec<f64> = std::iter::once(0.0).chain((-6..=18).map(|j| 10f64.powf(j as f64 * 0.5))).collect();
    let mut best = 0.0f64;
    let mut worst_config: Vec<f64> = Vec::new();
    let mut evaluations = 0usize;
    let record = |d: f64, n: usize, k: usize, x: f64, y: f64, best: &mut f64, cfg: &mut Vec<f64>| {
        if d > *best {
            *best = d;
            *cfg = std::iter::repeat_n(x, k).chain(std::iter::repeat_n(y, n - k)).collect();
        }
    };
    for n in 2..=n_max {
        let mut local = (f64::NEG_INFINITY, 1usize, 0.0, 0.0);
        for k in 1..=n {
            for &x in &grid[1..] {
                for &y in &grid {
                    let d = two_value_defect(n, k, x, y, rho);
                    evaluations += 1;
                    if d > local.0 {
                        local = (d, k, x, y);
                    }
                }
            }
        }
        // pattern search in (log x, log y)
        let (mut d0, k, x0, y0) = local;
        let mut lx = x0.ln();
        let mut ly = if y0 > 0.0 { y0.ln() } else { f64::NEG_INFINITY };
        let mut step = 0.5f64;
        while step > 1e-6 {
            let mut improved = false;
            for (dx, dy) in [(step, 0.0), (-step, 0.0), (0.0, step), (0.0, -step)] {
                if ly == f64::NEG_INFINITY && dy != 0.0 {
                    continue;
                }
                let (cx, cy) = (lx + dx, ly + dy);
                let yv = if cy == f64::NEG_INFINITY { 0.0 } else { cy.exp() };
                let d = two_value_defect(n, k, cx.exp(), yv, rho);
                evaluations += 1;
                if d > d0 {
                    d0 = d;
                    lx = cx;
                    ly = cy;
                    improved = true;
                }
            }
            if !improved {
                step *= 0.5;
            }
        }
        let yv = if ly == f64::NEG_INFINITY { 0.0 } else { ly.exp() };
        record(d0, n, k, lx.exp(), yv, &mut best, &mut worst_config);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..budget {
        let n = rng.random_range(2..=n_max);
        let xs: Vec<f64> = (0..n).map(|_| (rng.random::<f64>() * 35.0 - 7.0).exp()).collect();
        let d = quasi_metric_defect(&xs, rho);
        evaluations += 1;
        if d > best {
            best = d;
            worst_config = xs;
        }
    }
    Ok(QuasiMetricCert { rho, n_max, budget, seed, c_hat: best.max(0.0), worst_config, evaluations })
}

// ---------------------------------------------------------------------------
// Extract inequality

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ExtractBound {
    /// `(1 − 2ρy/((1+x)log(1+x)))·log^ρ(1+x)`.
    pub bound: f64,
    /// `log^ρ(1+x−y)`.
    pub actual: f64,
}

pub fn extract_lower_bound(x: f64, y: f64, rho: f64) -> Result<ExtractBound, GeometryError> {
    if !(x > y && y > 0.0 && 1.0 + x > 2.0 * y && rho > 1.0) {
        return Err(GeometryError::PreconditionViolated(format!("extract needs x > y > 0, 1+x > 2y, ρ > 1 (got x={x}, y={y}, ρ={rho})")));
    }
    let lx = x.ln_1p();
    let bound = (1.0 - 2.0 * rho * y / ((1.0 + x) * lx)) * lx.powf(rho);
    let actual = log_rho(x - y, rho);
    if actual < bound - 1e-12 * actual.abs().max(1.0) {
        return Err(GeometryError::InequalityViolated(format!("log^ρ(1+x−y) = {actual} < {bound} at x={x}, y={y}, ρ={rho}")));
    }
    Ok(ExtractBound { bound, actual })
}

// ---------------------------------------------------------------------------
// Regular deformation

/// Result of closing a site set under block absorption.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Deformation {
    pub set: SiteSet,
    /// `max_{x ∈ B*} dist(x, B)`.
    pub realized_pad: i64,
    pub sweeps: usize,
    pub absorbed: usize,
}

/// Default cap on full descending sweeps in [`regular_deformation`].
pub const DEFORMATION_SWEEP_CAP: usize = 64;

fn meets(block: &SiteSet, set: &HashSet<Site>, test_pad: i64) -> bool {
    if test_pad <= 0 {
        return block.iter().any(|x| set.contains(x));
    }
    block.iter().any(|x| {
        box_around(&HalfPoint::from_site(x), test_pad as f64)
            .map(|b| b.sites.iter().any(|y| set.contains(y)))
            .unwrap_or(false)
    })
}

/// Closes `b` under absorption of enlarged blocks.
///
/// `scales[r]` holds the enlarged blocks of scale `r+1`, ordered by center.
/// Scales are processed from the top down; at each scale every block whose
/// `test_pad`-neighborhood meets the current set is adjoined until nothing
/// changes, and the descending pass repeats until a full sweep is idle.
pub fn regular_deformation(b: &SiteSet, scales: &[Vec<SiteSet>], test_pad: i64, sweep_cap: usize) -> Result<Deformation, GeometryError> {
    let mut current: HashSet<Site> = b.iter().cloned().collect();
    let mut absorbed_flags: Vec<Vec<bool>> = scales.iter().map(|bl| vec![false; bl.len()]).collect();
    let mut sweeps = 0;
    loop {
        if sweeps >= sweep_cap {
            return Err(GeometryError::NonConvergence { iterations: sweeps });
        }
        sweeps += 1;
        let mut sweep_changed = false;
        for r in (0..scales.len()).rev() {
            loop {
                let mut pass_changed = false;
                for (i, block) in scales[r].iter().enumerate() {
                    if absorbed_flags[r][i] {
                        continue;
                    }
                    if meets(block, &current, test_pad) {
                        absorbed_flags[r][i] = true;
                        let before = current.len();
                        current.extend(block.iter().cloned());
                        if current.len() != before {
                            pass_changed = true;
                        }
                    }
                }
                if !pass_changed {
                    break;
                }
                sweep_changed = true;
            }
        }
        if !sweep_changed {
            break;
        }
    }
    let set: SiteSet = current.into_iter().collect();
    let realized_pad = set
        .iter()
        .filter(|x| !b.contains(*x))
        .map(|x| b.iter().map(|y| x.dist(y)).min().unwrap_or(0))
        .max()
        .unwrap_or(0);
    let absorbed = absorbed_flags.iter().flatten().filter(|f| **f).count();
    Ok(Deformation { set, realized_pad, sweeps, absorbed })
}

/// First enlarged block that meets `set` without being contained in it,
/// as `(scale index, block index)`.
pub fn regularity_violation(set: &SiteSet, scales: &[Vec<SiteSet>]) -> Option<(usize, usize)> {
    for (r, blocks) in scales.iter().enumerate() {
        for (i, block) in blocks.iter().enumerate() {
            let meets = block.iter().any(|x| set.contains(x));
            if meets && !block.is_subset(set) {
                return Some((r, i));
            }
        }
    }
    None
}
