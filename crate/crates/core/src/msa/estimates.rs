//! Empirical checks of the norm and decay estimates on good sets and blocks.

use serde::Serialize;

use super::good::check_good;
use super::resonance::resonance_distance;
use super::{MsaError, MsaStack};
use crate::greens::{decay_scan, green_solve, DecayFit};
use crate::lattice::{HalfPoint, Site, SiteSet};
use crate::linalg::{self, c};
use crate::model::{assemble_on_sites, EnergyPoint, ModelSpec};

/// Size up to which norms come from a full singular value decomposition.
pub const EXACT_NORM_MAX: usize = 600;

#[derive(Clone, Debug, PartialEq)]
pub enum EstimateTarget {
    /// A finite set, required to be `s`-good.
    Set(SiteSet),
    /// The enlarged block of the `index`-th center of scale `s`, required non-resonant.
    Block(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NormCheck {
    pub name: String,
    pub log_bound: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct EstimateReport {
    pub s: usize,
    pub sites: usize,
    pub norm: f64,
    pub checks: Vec<NormCheck>,
    pub fit: DecayFit,
    pub passed: bool,
}

fn log_product(theta: f64, k: &HalfPoint, omega: &[f64], theta_s: crate::C64) -> f64 {
    -resonance_distance(theta, k, omega, theta_s, -1.0).ln() - resonance_distance(theta, k, omega, theta_s, 1.0).ln()
}

pub fn verify_statement_estimates(model: &ModelSpec, stack: &MsaStack, s: usize, target: &EstimateTarget) -> Result<EstimateReport, MsaError> {
    let sched = &stack.schedule;
    let omega = &model.frequency.omega;
    let theta_s = stack.trace.steps.get(s).map(|st| st.theta).ok_or_else(|| MsaError::InvalidSchedule(format!("no θ_{s} in the trace")))?;
    let (sites, mut checks, rate, cutoff): (Vec<Site>, Vec<(String, f64)>, f64, f64) = match target {
        EstimateTarget::Set(lambda) => {
            let verdict = check_good(lambda, s, stack)?;
            if !verdict.good {
                return Err(MsaError::NotGood { s, witness: Box::new(verdict.witness) });
            }
            let sites: Vec<Site> = lambda.iter().cloned().collect();
            if s == 0 {
                let k1 = model.potential.kappa1;
                (sites, vec![("lemma0g_norm".into(), (2.0 / k1).ln() - 2.0 * sched.log_delta(0))], 0.75 * model.alpha(), 0.0)
            } else {
                let fam = &stack.blocks[s - 1];
                let sup = fam
                    .centers
                    .iter()
                    .zip(&fam.omega_tilde)
                    .filter(|(_, b)| b.is_subset(lambda))
                    .map(|(k, _)| log_product(stack.theta, k, omega, theta_s))
                    .fold(f64::NEG_INFINITY, f64::max);
                let mut checks = vec![("tsg_delta".to_string(), -3.0 * sched.log_delta(s))];
                if sup.is_finite() {
                    checks.push(("tsg_product".into(), 2f64.ln() - 3.0 * sched.log_delta(s - 1) + sup));
                }
                (sites, checks, sched.scale(s).alpha, 10.0 * fam.zeta_tilde as f64)
            }
        }
        EstimateTarget::Block(idx) => {
            if s == 0 {
                return Err(MsaError::InvalidSchedule("block estimates start at scale 1".into()));
            }
            let fam = &stack.blocks[s - 1];
            let k = fam.centers.get(*idx).ok_or_else(|| MsaError::InvalidSchedule(format!("no center with index {idx}")))?;
            if stack.resonances[s].in_q(k) {
                return Err(MsaError::NotGood { s, witness: Box::new(Some(super::good::GoodWitness::ResonantBlock { scale: s, center: k.clone() })) });
            }
            let sites: Vec<Site> = fam.omega_tilde[*idx].iter().cloned().collect();
            let prod = log_product(stack.theta, k, omega, theta_s);
            let checks = vec![
                ("psqs_norm".to_string(), -2.0 * sched.log_delta(s - 1) - 2.0 * sched.log_delta(s)),
                ("block_product".to_string(), -2.0 * sched.log_delta(s - 1) + prod),
            ];
            let alpha_prime = sched.scale(s).alpha_prime.unwrap_or(sched.scale(s - 1).alpha);
            (sites, checks, alpha_prime, fam.zeta_tilde as f64 / 10.0)
        }
    };
    let r = assemble_on_sites(model, &sites, c(stack.theta, 0.0), EnergyPoint::real(stack.energy))?;
    let g = green_solve(&r)?;
    let norm = if sites.len() <= EXACT_NORM_MAX { linalg::spectral_norm(&g.inverse) } else { g.op_norm };
    let fit = decay_scan(&g, rate, model.rho(), cutoff);
    let checks: Vec<NormCheck> = checks
        .drain(..)
        .map(|(name, log_bound)| NormCheck { pass: norm.ln() <= log_bound, name, log_bound })
        .collect();
    let passed = fit.passed() && checks.iter().all(|ch| ch.pass);
    Ok(EstimateReport { s, sites: sites.len(), norm, checks, fit, passed })
}
