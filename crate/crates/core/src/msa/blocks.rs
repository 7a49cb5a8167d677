//! Resonant blocks `Ω_k ⊂ 2Ω_k ⊂ Ω̃_k` and singular cores `A_k`.
//!
//! All blocks of one scale are translates `k + S` of a common shape `S`.
//! The shape starts as a sup-norm ball and grows until no lower-scale
//! enlarged block meets any translate without being contained in it; after
//! each round it is replaced by its symmetrization `S ∪ (−S)`.

use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use super::resonance::{Classification, ResonanceStructure};
use super::schedule::Case;
use super::MsaError;
use crate::lattice::{box_around, sup_diam, HalfPoint, Site, SiteSet};

/// Iteration cap of the shape fixpoint.
pub const SHAPE_ITERATION_CAP: usize = 64;
/// Number of separation violations kept verbatim in a report.
pub const SEPARATION_SAMPLE: usize = 64;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeparationPolicy {
    #[default]
    Enforce,
    Report,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SeparationViolation {
    pub a: HalfPoint,
    pub b: HalfPoint,
    pub distance: i64,
    /// `10 · diam Ω̃`.
    pub required: i64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BlockFamily {
    pub s: usize,
    pub case: Case,
    pub centers: Vec<HalfPoint>,
    pub omega: Vec<SiteSet>,
    pub omega2: Vec<SiteSet>,
    pub omega_tilde: Vec<SiteSet>,
    pub cores: Vec<SiteSet>,
    /// `Ω − k`, `2Ω − k`, `Ω̃ − k`, common to all centers.
    pub shapes: [Vec<HalfPoint>; 3],
    /// `A − k`.
    pub core_shape: Vec<HalfPoint>,
    /// Starting radii of `(Ω, 2Ω, Ω̃)`.
    pub radii: [f64; 3],
    /// Largest excess `‖x‖ − radius` over each shape.
    pub realized_pad: [f64; 3],
    pub zeta: i64,
    pub zeta_tilde: i64,
    pub shape_iterations: usize,
    pub separation_violation_count: usize,
    pub separation_violations: Vec<SeparationViolation>,
}

/// Centers `P_s` from the resonances and case of scale `s − 1`:
/// `Q_{s−1}` in case (C1), and `{o + l/2 : o ∈ Q^− ∪ (Q^+ − l)}` in case (C2).
pub fn next_centers(res: &ResonanceStructure, class: &Classification) -> Vec<HalfPoint> {
    let mut out: Vec<HalfPoint> = match class.case {
        Case::C1 => res.q(),
        Case::C2 => {
            let l = HalfPoint::from_site(&class.l);
            let half_l = HalfPoint::from_twice(class.l.0.clone());
            let neg_l = l.neg();
            res.q_minus
                .iter()
                .cloned()
                .chain(res.q_plus.iter().map(|i| i.add(&neg_l)))
                .map(|o| o.add(&half_l))
                .collect()
        }
    };
    out.sort();
    out.dedup();
    out
}

/// `A − k` at scale `s` from the previous core shape.
pub fn next_core_shape(prev: &[HalfPoint], case: Case, l: &Site) -> Vec<HalfPoint> {
    let mut out: BTreeSet<HalfPoint> = BTreeSet::new();
    match case {
        Case::C1 => out.extend(prev.iter().cloned()),
        Case::C2 => {
            let half_l = HalfPoint::from_twice(l.0.clone());
            for a in prev {
                out.insert(a.sub(&half_l));
                out.insert(a.add(&half_l));
            }
        }
    }
    out.into_iter().collect()
}

fn translate(k: &HalfPoint, shape: &BTreeSet<HalfPoint>) -> SiteSet {
    shape.iter().map(|x| k.add(x).to_site().expect("shape lies in the coset of −k")).collect()
}

fn ball_shape(k: &HalfPoint, radius: f64) -> Result<BTreeSet<HalfPoint>, MsaError> {
    let bx = box_around(k, radius)?;
    Ok(bx.sites.iter().map(|s| HalfPoint::from_site(s).sub(k)).collect())
}

fn absorb(block: &mut HashSet<Site>, lower: &[&SiteSet]) {
    loop {
        let mut changed = false;
        for b in lower {
            if b.iter().any(|x| block.contains(x)) && !b.iter().all(|x| block.contains(x)) {
                block.extend(b.iter().cloned());
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
}

fn grow_shape(centers: &[HalfPoint], mut shape: BTreeSet<HalfPoint>, lower: &[&SiteSet]) -> Result<(BTreeSet<HalfPoint>, usize), MsaError> {
    for it in 1..=SHAPE_ITERATION_CAP {
        let mut next = shape.clone();
        for k in centers {
            let mut block: HashSet<Site> = translate(k, &shape).into_iter().collect();
            absorb(&mut block, lower);
            for x in block {
                next.insert(HalfPoint::from_site(&x).sub(k));
            }
        }
        let mirrored: Vec<HalfPoint> = next.iter().map(|x| x.neg()).collect();
        next.extend(mirrored);
        if next == shape {
            return Ok((shape, it));
        }
        shape = next;
    }
    Err(MsaError::ShapeNonConvergence { iterations: SHAPE_ITERATION_CAP })
}

fn excess(shape: &BTreeSet<HalfPoint>, radius: f64) -> f64 {
    shape.iter().map(|x| x.twice_norm() as f64 / 2.0 - radius).fold(0.0, f64::max)
}

/// Builds the blocks of scale `s` around `centers`.
///
/// `lower` lists the enlarged blocks `Ω̃^{s'}` of scales `1 ≤ s' < s`; scale-0
/// blocks are single sites and never need absorbing.
pub fn construct_blocks(
    s: usize,
    centers: &[HalfPoint],
    case: Case,
    radii: [f64; 3],
    core_shape: Vec<HalfPoint>,
    lower: &[&BlockFamily],
    policy: SeparationPolicy,
) -> Result<BlockFamily, MsaError> {
    if !(radii[0] < radii[1] && radii[1] < radii[2]) {
        return Err(MsaError::InvalidSchedule(format!("block radii must be strictly increasing, got {radii:?}")));
    }
    if let Some(first) = centers.first() {
        let parity = first.parity();
        if centers.iter().any(|k| k.parity() != parity) {
            return Err(MsaError::InvalidSchedule("block centers must share one coset of Z^d".into()));
        }
    }
    let lower_blocks: Vec<&SiteSet> = lower.iter().flat_map(|f| f.omega_tilde.iter()).collect();
    let d = centers.first().map(|k| k.dim()).unwrap_or(1);
    let reference = centers.first().cloned().unwrap_or_else(|| HalfPoint::origin(d));
    let mut shapes: Vec<BTreeSet<HalfPoint>> = Vec::with_capacity(3);
    let mut iterations = 0;
    for (level, &r) in radii.iter().enumerate() {
        let mut start = ball_shape(&reference, r)?;
        if level > 0 {
            start.extend(shapes[level - 1].iter().cloned());
        }
        let (shape, it) = if centers.is_empty() { (start, 0) } else { grow_shape(centers, start, &lower_blocks)? };
        iterations += it;
        shapes.push(shape);
    }
    let core_set: BTreeSet<HalfPoint> = core_shape.iter().cloned().collect();
    if !core_set.is_subset(&shapes[0]) {
        return Err(MsaError::InvalidSchedule("singular core does not fit inside Ω; radii are too small for the core".into()));
    }

    let omega: Vec<SiteSet> = centers.iter().map(|k| translate(k, &shapes[0])).collect();
    let omega2: Vec<SiteSet> = centers.iter().map(|k| translate(k, &shapes[1])).collect();
    let omega_tilde: Vec<SiteSet> = centers.iter().map(|k| translate(k, &shapes[2])).collect();
    let cores: Vec<SiteSet> = centers.iter().map(|k| translate(k, &core_set)).collect();
    let zeta = omega.first().map(|b| sup_diam(b.iter())).unwrap_or(0);
    let zeta_tilde = omega_tilde.first().map(|b| sup_diam(b.iter())).unwrap_or(0);

    let (count, sample) = separation_scan(centers, &shapes[2], zeta_tilde);
    if count > 0 && policy == SeparationPolicy::Enforce {
        let v = sample[0].clone();
        return Err(MsaError::SeparationViolated { a: v.a, b: v.b, distance: v.distance, required: v.required });
    }
    let realized_pad = [excess(&shapes[0], radii[0]), excess(&shapes[1], radii[1]), excess(&shapes[2], radii[2])];
    Ok(BlockFamily {
        s,
        case,
        centers: centers.to_vec(),
        omega,
        omega2,
        omega_tilde,
        cores,
        shapes: [shapes[0].iter().cloned().collect(), shapes[1].iter().cloned().collect(), shapes[2].iter().cloned().collect()],
        core_shape: core_set.into_iter().collect(),
        radii,
        realized_pad,
        zeta,
        zeta_tilde,
        shape_iterations: iterations,
        separation_violation_count: count,
        separation_violations: sample,
    })
}

/// Pairs of centers whose enlarged blocks are within `10 · diam Ω̃`.
fn separation_scan(centers: &[HalfPoint], shape: &BTreeSet<HalfPoint>, diam: i64) -> (usize, Vec<SeparationViolation>) {
    let required = 10 * diam;
    let mut diffs: BTreeSet<HalfPoint> = BTreeSet::new();
    for x in shape {
        for y in shape {
            diffs.insert(x.sub(y));
        }
    }
    let diffs: Vec<HalfPoint> = diffs.into_iter().collect();
    let extent = diffs.iter().map(|z| z.twice_norm()).max().unwrap_or(0);
    let mut count = 0;
    let mut sample = Vec::new();
    for (i, a) in centers.iter().enumerate() {
        for b in &centers[i + 1..] {
            let gap = a.sub(b);
            // dist(a + S, b + S) = min_{z ∈ S − S} ‖(a − b) + z‖ ≥ ‖a − b‖ − extent
            if gap.twice_norm() - extent > 2 * required {
                continue;
            }
            let dist = diffs.iter().map(|z| gap.add(z).twice_norm()).min().unwrap_or(0) / 2;
            if dist <= required {
                count += 1;
                if sample.len() < SEPARATION_SAMPLE {
                    sample.push(SeparationViolation { a: a.clone(), b: b.clone(), distance: dist, required });
                }
            }
        }
    }
    (count, sample)
}

/// One failure found by [`closure_report`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClosureViolation {
    /// 0: `Ω`, 1: `2Ω`, 2: `Ω̃` meets a lower `Ω̃` without containing it.
    pub level: usize,
    pub center: HalfPoint,
    pub lower_scale: usize,
    pub lower_index: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ClosureReport {
    pub violations: Vec<ClosureViolation>,
    pub separation_violations: usize,
    /// Centers whose `Ω̃ − k` or `A − k` differs from the first center's, or is not symmetric.
    pub asymmetries: usize,
    pub nesting_failures: usize,
}

impl ClosureReport {
    pub fn clean(&self) -> bool {
        self.violations.is_empty() && self.separation_violations == 0 && self.asymmetries == 0 && self.nesting_failures == 0
    }
}

fn relative(k: &HalfPoint, set: &SiteSet) -> BTreeSet<HalfPoint> {
    set.iter().map(|x| HalfPoint::from_site(x).sub(k)).collect()
}

fn symmetric(set: &BTreeSet<HalfPoint>) -> bool {
    set.iter().all(|x| set.contains(&x.neg()))
}

/// Exhaustive check of the closure clauses, translation invariance and symmetry.
pub fn closure_report(family: &BlockFamily, lower: &[&BlockFamily]) -> ClosureReport {
    let mut report = ClosureReport::default();
    for (idx, k) in family.centers.iter().enumerate() {
        let levels = [&family.omega[idx], &family.omega2[idx], &family.omega_tilde[idx]];
        if !(levels[0].is_subset(levels[1]) && levels[1].is_subset(levels[2]) && family.cores[idx].is_subset(levels[0])) {
            report.nesting_failures += 1;
        }
        for (level, set) in levels.iter().enumerate() {
            for lf in lower {
                for (li, b) in lf.omega_tilde.iter().enumerate() {
                    if !b.is_disjoint(set) && !b.is_subset(set) {
                        report.violations.push(ClosureViolation { level, center: k.clone(), lower_scale: lf.s, lower_index: li });
                    }
                }
            }
        }
    }
    if let Some(k0) = family.centers.first() {
        let t0 = relative(k0, &family.omega_tilde[0]);
        let a0 = relative(k0, &family.cores[0]);
        for (idx, k) in family.centers.iter().enumerate() {
            let t = relative(k, &family.omega_tilde[idx]);
            let a = relative(k, &family.cores[idx]);
            if t != t0 || a != a0 || !symmetric(&t) || !symmetric(&a) || a.len() > 1usize << family.s.min(62) {
                report.asymmetries += 1;
            }
        }
    }
    let diam = family.zeta_tilde;
    for i in 0..family.centers.len() {
        for j in (i + 1)..family.centers.len() {
            let dist = crate::lattice::set_dist(family.omega_tilde[i].iter(), family.omega_tilde[j].iter()).unwrap_or(i64::MAX);
            if dist <= 10 * diam {
                report.separation_violations += 1;
            }
        }
    }
    report
}
