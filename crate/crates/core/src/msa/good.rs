//! The `s`-good and `s`-regular predicates on finite site sets.

use serde::Serialize;

use super::{MsaError, MsaStack};
use crate::lattice::{HalfPoint, Site, SiteSet};

/// The clause that failed, with its witnesses.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum GoodWitness {
    /// `k' ∈ Q_{s'}` with `Ω̃^{s'}_{k'} ⊂ Λ` and `Ω̃^{s'}_{k'} ⊂ Ω^{s'+1}_k`, yet `Ω̃^{s'+1}_k ⊄ Λ`.
    Inheritance { scale: usize, inner: HalfPoint, outer: HalfPoint },
    /// `k ∈ Q_s` with `Ω̃^s_k ⊂ Λ`.
    ResonantBlock { scale: usize, center: HalfPoint },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GoodVerdict {
    pub s: usize,
    pub good: bool,
    pub witness: Option<GoodWitness>,
}

/// `Ω̃^{s}_{k}` for the `idx`-th center of scale `s`; scale-0 blocks are `{k}`.
fn tilde_block(stack: &MsaStack, s: usize, k: &HalfPoint, idx: usize) -> SiteSet {
    if s == 0 {
        return k.to_site().into_iter().collect();
    }
    stack.blocks[s - 1].omega_tilde[idx].clone()
}

fn centers(stack: &MsaStack, s: usize) -> &[HalfPoint] {
    if s == 0 {
        &stack.resonances[0].p
    } else {
        &stack.blocks[s - 1].centers
    }
}

/// Largest sup-norm reach of an enlarged block around its center, scales `1..=s`.
pub fn block_reach(stack: &MsaStack, s: usize) -> i64 {
    (1..=s.min(stack.blocks.len()))
        .map(|t| stack.blocks[t - 1].shapes[2].iter().map(|x| (x.twice_norm() + 1) / 2).max().unwrap_or(0))
        .max()
        .unwrap_or(0)
}

/// Requires `Λ` to stay `block_reach` inside the analysed window.
pub fn check_window(stack: &MsaStack, lambda: &SiteSet, s: usize) -> Result<(), MsaError> {
    let margin = block_reach(stack, s);
    let w = &stack.window;
    if let Some(x) = lambda.iter().find(|x| x.dist(&w.center) + margin > w.radius) {
        return Err(MsaError::WindowTooSmall { site: x.clone(), margin, window_radius: w.radius });
    }
    Ok(())
}

pub fn check_good(lambda: &SiteSet, s: usize, stack: &MsaStack) -> Result<GoodVerdict, MsaError> {
    if s >= stack.resonances.len() {
        return Err(MsaError::InvalidSchedule(format!("structures only reach scale {}", stack.resonances.len().saturating_sub(1))));
    }
    check_window(stack, lambda, s)?;
    for sp in 0..s {
        let res = &stack.resonances[sp];
        let next = &stack.blocks[sp];
        for (idx, k_inner) in centers(stack, sp).iter().enumerate() {
            if !res.in_q(k_inner) {
                continue;
            }
            let inner = tilde_block(stack, sp, k_inner, idx);
            if !inner.is_subset(lambda) {
                continue;
            }
            for (oi, k_outer) in next.centers.iter().enumerate() {
                if inner.is_subset(&next.omega[oi]) && !next.omega_tilde[oi].is_subset(lambda) {
                    return Ok(GoodVerdict { s, good: false, witness: Some(GoodWitness::Inheritance { scale: sp, inner: k_inner.clone(), outer: k_outer.clone() }) });
                }
            }
        }
    }
    let res = &stack.resonances[s];
    for (idx, k) in centers(stack, s).iter().enumerate() {
        if res.in_q(k) && tilde_block(stack, s, k, idx).is_subset(lambda) {
            return Ok(GoodVerdict { s, good: false, witness: Some(GoodWitness::ResonantBlock { scale: s, center: k.clone() }) });
        }
    }
    Ok(GoodVerdict { s, good: true, witness: None })
}

/// First enlarged block of scale `1..=s` meeting `Λ` without lying inside it.
pub fn regular_violation(lambda: &SiteSet, s: usize, stack: &MsaStack) -> Option<(usize, HalfPoint)> {
    for t in 1..=s.min(stack.blocks.len()) {
        let fam = &stack.blocks[t - 1];
        for (k, b) in fam.centers.iter().zip(&fam.omega_tilde) {
            if !b.is_disjoint(lambda) && !b.is_subset(lambda) {
                return Some((t, k.clone()));
            }
        }
    }
    None
}

/// Sites of `Λ` lying in some `Q_0`: the scale-0 obstruction.
pub fn resonant_sites_in(lambda: &SiteSet, stack: &MsaStack) -> Vec<Site> {
    let res = &stack.resonances[0];
    lambda.iter().filter(|x| res.in_q(&HalfPoint::from_site(x))).cloned().collect()
}
