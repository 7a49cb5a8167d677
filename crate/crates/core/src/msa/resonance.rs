//! Resonant sites `Q_s^±`, `Q̃_s^±` and the case dichotomy.

use serde::Serialize;

use super::schedule::Case;
use crate::lattice::{box_around, GeometryError, HalfPoint, Site};
use crate::linalg::{c, C64};
use crate::model::torus_norm;

/// Finite region scanned for resonances: the sup-norm ball `Λ_radius(center)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Window {
    pub center: Site,
    pub radius: i64,
}

impl Window {
    pub fn new(center: Site, radius: i64) -> Self {
        Window { center, radius }
    }

    pub fn around_origin(d: usize, radius: i64) -> Self {
        Window { center: Site::origin(d), radius }
    }

    pub fn contains_half(&self, p: &HalfPoint) -> bool {
        p.twice_dist_to(&self.center) <= 2 * self.radius
    }

    pub fn contains(&self, s: &Site) -> bool {
        s.dist(&self.center) <= self.radius
    }

    /// Points of `(Z^d + offset) ∩ window` in lexicographic order.
    pub fn lattice_points(&self, offset: &HalfPoint) -> Result<Vec<HalfPoint>, GeometryError> {
        if self.radius < 0 {
            return Ok(Vec::new());
        }
        let bx = box_around(&HalfPoint::from_site(&self.center), self.radius as f64 + 1.0)?;
        let parity = offset.parity();
        let mut out: Vec<HalfPoint> = bx
            .sites
            .iter()
            .map(|s| {
                let twice: Vec<i64> = s.0.iter().zip(&parity).map(|(x, p)| 2 * x + p).collect();
                HalfPoint::from_twice(twice)
            })
            .filter(|p| self.contains_half(p))
            .collect();
        out.sort();
        out.dedup();
        Ok(out)
    }
}

/// Resonant sets at one scale.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResonanceStructure {
    pub s: usize,
    /// Accumulated offset `(1/2)Σ l_i`.
    pub offset: HalfPoint,
    pub window: Window,
    pub theta: f64,
    pub theta_s: C64,
    pub log_delta: f64,
    pub log_tilde: f64,
    pub p: Vec<HalfPoint>,
    pub q_plus: Vec<HalfPoint>,
    pub q_minus: Vec<HalfPoint>,
    pub q_tilde_plus: Vec<HalfPoint>,
    pub q_tilde_minus: Vec<HalfPoint>,
    pub classification: Option<Classification>,
}

impl ResonanceStructure {
    /// `Q_s = Q_s^+ ∪ Q_s^−`, sorted.
    pub fn q(&self) -> Vec<HalfPoint> {
        let mut q: Vec<HalfPoint> = self.q_plus.iter().chain(&self.q_minus).cloned().collect();
        q.sort();
        q.dedup();
        q
    }

    pub fn in_q(&self, k: &HalfPoint) -> bool {
        self.q_plus.binary_search(k).is_ok() || self.q_minus.binary_search(k).is_ok()
    }
}

/// `‖θ + k·ω + σθ_s‖_T`.
pub fn resonance_distance(theta: f64, k: &HalfPoint, omega: &[f64], theta_s: C64, sigma: f64) -> f64 {
    torus_norm(c(theta + k.dot(omega), 0.0) + theta_s * sigma)
}

fn below(dist: f64, log_threshold: f64) -> bool {
    dist == 0.0 || dist.ln() < log_threshold
}

/// Scans the candidates `p` for both signs against `δ_s` and the wide threshold.
///
/// Comparisons run in log form so thresholds far below `f64::MIN_POSITIVE` work.
pub fn detect_resonances(
    theta: f64,
    theta_s: C64,
    omega: &[f64],
    s: usize,
    log_delta: f64,
    log_tilde: f64,
    p: Vec<HalfPoint>,
    window: Window,
    offset: HalfPoint,
) -> ResonanceStructure {
    let mut p: Vec<HalfPoint> = p.into_iter().filter(|k| window.contains_half(k)).collect();
    p.sort();
    p.dedup();
    let mut sets: [Vec<HalfPoint>; 4] = Default::default();
    for k in &p {
        let plus = resonance_distance(theta, k, omega, theta_s, 1.0);
        let minus = resonance_distance(theta, k, omega, theta_s, -1.0);
        if below(plus, log_delta) {
            sets[0].push(k.clone());
        }
        if below(minus, log_delta) {
            sets[1].push(k.clone());
        }
        if below(plus, log_tilde) {
            sets[2].push(k.clone());
        }
        if below(minus, log_tilde) {
            sets[3].push(k.clone());
        }
    }
    let [q_plus, q_minus, q_tilde_plus, q_tilde_minus] = sets;
    ResonanceStructure { s, offset, window, theta, theta_s, log_delta, log_tilde, p, q_plus, q_minus, q_tilde_plus, q_tilde_minus, classification: None }
}

/// Outcome of the case dichotomy at one scale.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Classification {
    pub case: Case,
    /// `dist(Q̃^−, Q^+)`, `None` when either set is empty.
    pub distance: Option<f64>,
    pub separation_radius: f64,
    /// `l = i − j`, zero in case (C1).
    pub l: Site,
    pub i: Option<HalfPoint>,
    pub j: Option<HalfPoint>,
}

/// (C1) iff `dist(Q̃^−, Q^+) > radius`; otherwise the lexicographically
/// smallest witness `i ∈ Q^+`, then `j ∈ Q̃^−`, with `‖i − j‖ ≤ radius`.
pub fn classify_case(q_tilde_minus: &[HalfPoint], q_plus: &[HalfPoint], radius: f64, d: usize) -> Classification {
    let mut distance: Option<i64> = None;
    for i in q_plus {
        for j in q_tilde_minus {
            let t = i.sub(j).twice_norm();
            distance = Some(distance.map_or(t, |m| m.min(t)));
        }
    }
    let distance = distance.map(|t| t as f64 / 2.0);
    let close = distance.is_some_and(|dd| dd <= radius);
    if !close {
        return Classification { case: Case::C1, distance, separation_radius: radius, l: Site::origin(d), i: None, j: None };
    }
    let mut is: Vec<&HalfPoint> = q_plus.iter().collect();
    is.sort();
    let mut js: Vec<&HalfPoint> = q_tilde_minus.iter().collect();
    js.sort();
    for i in &is {
        for j in &js {
            if (i.sub(j).twice_norm() as f64) <= 2.0 * radius {
                let diff = i.sub(j);
                let l = diff.to_site().expect("Q^+ and Q̃^- share a coset");
                return Classification { case: Case::C2, distance, separation_radius: radius, l, i: Some((*i).clone()), j: Some((*j).clone()) };
            }
        }
    }
    unreachable!("a close pair exists when the minimal distance is within the radius")
}
