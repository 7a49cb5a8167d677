//! Randomized instance suites for the matrix and geometric lemmas.

use qplab::greens::{combes_thomas_check, det_perturbation_bound, determinant_evenness_check, hadamard_adjugate_bound, schur_complement, GreenError};
use qplab::lattice::{box_around, extract_lower_bound, quasi_metric_certify, GeometryError, HalfPoint, QuasiMetricCert};
use qplab::linalg::{c, random_disk_matrix, CMat};
use qplab::model::{assemble_on_sites, EnergyPoint};
use qplab::ModelSpec;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// Largest matrix size drawn by the oracle-checked suites.
pub const MAX_ORACLE_SIZE: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    QuasiMetric,
    Extract,
    Hadamard,
    Schur,
    DetPerturbation,
    Evenness,
    CombesThomas,
}

impl Suite {
    pub const ALL: [Suite; 7] = [Suite::QuasiMetric, Suite::Extract, Suite::Hadamard, Suite::Schur, Suite::DetPerturbation, Suite::Evenness, Suite::CombesThomas];

    pub fn name(self) -> &'static str {
        match self {
            Suite::QuasiMetric => "quasi-metric",
            Suite::Extract => "extract",
            Suite::Hadamard => "hadamard",
            Suite::Schur => "schur",
            Suite::DetPerturbation => "det-perturbation",
            Suite::Evenness => "evenness",
            Suite::CombesThomas => "combes-thomas",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SuiteResult {
    pub suite: Suite,
    pub instances: usize,
    pub violations: usize,
    /// Instances outside the lemma's hypotheses (singular blocks, nonpositive denominators).
    pub skipped: usize,
    pub first_violation: Option<String>,
}

impl SuiteResult {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

enum Outcome {
    Pass,
    Skip,
    Fail(String),
}

fn tally(suite: Suite, instances: usize, mut f: impl FnMut(usize) -> Outcome) -> SuiteResult {
    let mut r = SuiteResult { suite, instances, violations: 0, skipped: 0, first_violation: None };
    for i in 0..instances {
        match f(i) {
            Outcome::Pass => {}
            Outcome::Skip => r.skipped += 1,
            Outcome::Fail(msg) => {
                r.violations += 1;
                r.first_violation.get_or_insert(format!("instance {i}: {msg}"));
            }
        }
    }
    r
}

fn log_uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    (rng.random_range(lo.ln()..hi.ln())).exp()
}

/// Quasi-metric tuples checked against certificates for `ρ ∈ {1.5, 2, 3}` fitted on separate seeds.
fn quasi_metric(rng: &mut ChaCha8Rng, instances: usize) -> SuiteResult {
    let rhos = [1.5, 2.0, 3.0];
    let certs: Vec<QuasiMetricCert> = rhos.iter().map(|&r| quasi_metric_certify(r, MAX_ORACLE_SIZE, 20_000, 0x9e37).expect("valid certificate inputs")).collect();
    tally(Suite::QuasiMetric, instances, |_| {
        let cert = &certs[rng.random_range(0..certs.len())];
        let n = rng.random_range(2..=MAX_ORACLE_SIZE);
        let xs: Vec<f64> = (0..n).map(|_| if rng.random_bool(0.1) { 0.0 } else { log_uniform(rng, 1e-3, 1e8) }).collect();
        if cert.admits(&xs) {
            Outcome::Pass
        } else {
            Outcome::Fail(format!("ρ = {}, tuple {xs:?}", cert.rho))
        }
    })
}

fn extract(rng: &mut ChaCha8Rng, instances: usize) -> SuiteResult {
    tally(Suite::Extract, instances, |_| {
        let rho = rng.random_range(1.05..3.0);
        let x = log_uniform(rng, 1e-2, 1e8);
        let y = rng.random_range(0.0..1.0) * x.min((1.0 + x) / 2.0);
        if y <= 0.0 {
            return Outcome::Skip;
        }
        match extract_lower_bound(x, y, rho) {
            Ok(_) => Outcome::Pass,
            Err(GeometryError::PreconditionViolated(_)) => Outcome::Skip,
            Err(e) => Outcome::Fail(e.to_string()),
        }
    })
}

fn random_matrix(rng: &mut ChaCha8Rng, n: usize) -> CMat {
    let scale = log_uniform(rng, 0.1, 10.0);
    random_disk_matrix(rng, n) * c(scale, 0.0)
}

fn hadamard(rng: &mut ChaCha8Rng, instances: usize) -> SuiteResult {
    tally(Suite::Hadamard, instances, |_| {
        let n = rng.random_range(1..=MAX_ORACLE_SIZE);
        let m = random_matrix(rng, n);
        let r = hadamard_adjugate_bound(&m);
        if r.holds {
            Outcome::Pass
        } else {
            Outcome::Fail(format!("n = {n}, max adjugate {:?} > bound {}", r.max_adjugate, r.bound))
        }
    })
}

fn schur(rng: &mut ChaCha8Rng, instances: usize) -> SuiteResult {
    tally(Suite::Schur, instances, |_| {
        let n = rng.random_range(2..=MAX_ORACLE_SIZE);
        let m = random_matrix(rng, n);
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(rng);
        let k = rng.random_range(1..n);
        let (mut l1, mut l2) = (idx[..k].to_vec(), idx[k..].to_vec());
        l1.sort_unstable();
        l2.sort_unstable();
        match schur_complement(&m, &l1, &l2) {
            Ok(d) if d.factorization_holds() && d.sandwich_holds() => Outcome::Pass,
            Ok(d) => Outcome::Fail(format!(
                "n = {n}, factorization defect {:e}, sandwich ({}, {}) with hypothesis {}",
                d.factorization_defect, d.sandwich_lower, d.sandwich_upper, d.hypothesis_holds
            )),
            Err(GreenError::ASingular { .. }) => Outcome::Skip,
            Err(e) => Outcome::Fail(e.to_string()),
        }
    })
}

fn det_perturbation(rng: &mut ChaCha8Rng, instances: usize) -> SuiteResult {
    tally(Suite::DetPerturbation, instances, |_| {
        let n = rng.random_range(1..=MAX_ORACLE_SIZE);
        let a = random_matrix(rng, n);
        let b = random_disk_matrix(rng, n) * c(log_uniform(rng, 1e-8, 1.0), 0.0);
        match det_perturbation_bound(&a, &b) {
            Ok(r) if r.holds => Outcome::Pass,
            Ok(r) => Outcome::Fail(format!("n = {n}, |Δdet| = {:e} > {:e}", r.difference, r.bound)),
            Err(e) => Outcome::Fail(e.to_string()),
        }
    })
}

/// Symmetric integer or half-integer point sets of up to eight points in `d = 1`.
fn evenness(rng: &mut ChaCha8Rng, instances: usize) -> SuiteResult {
    tally(Suite::Evenness, instances, |_| {
        let model = ModelSpec::golden_cosine(log_uniform(rng, 1e-4, 0.5));
        let half = rng.random_bool(0.5);
        let sites: Vec<HalfPoint> = if half {
            let r = rng.random_range(0..4i64);
            (-r - 1..=r).map(|k| HalfPoint::from_twice(vec![2 * k + 1])).collect()
        } else {
            let r = rng.random_range(0..4i64);
            (-r..=r).map(|k| HalfPoint::from_twice(vec![2 * k])).collect()
        };
        let z = c(rng.random_range(-0.5..0.5), rng.random_range(-0.2..0.2));
        let e = c(rng.random_range(-1.0..1.0), 0.0);
        match determinant_evenness_check(&model, &sites, z, e) {
            Ok(r) if r.holds => Outcome::Pass,
            Ok(r) => Outcome::Fail(format!("defect {:e} at z = {z}", r.defect)),
            Err(e) => Outcome::Fail(e.to_string()),
        }
    })
}

/// Model restrictions on `Λ₈` at complex `z` at least `1/2` from the spectrum.
fn combes_thomas(rng: &mut ChaCha8Rng, instances: usize) -> SuiteResult {
    let cert = quasi_metric_certify(2.0, 2, 2000, 0x51).expect("valid certificate inputs");
    let bx = box_around(&HalfPoint::origin(1), 8.0).expect("small box");
    tally(Suite::CombesThomas, instances, |_| {
        let model = ModelSpec::golden_cosine(log_uniform(rng, 1e-4, 5e-2));
        let theta: f64 = rng.random();
        let r = match assemble_on_sites(&model, &bx.sites, c(theta, 0.0), EnergyPoint::real(0.0)) {
            Ok(r) => r,
            Err(e) => return Outcome::Fail(e.to_string()),
        };
        let h = r.hamiltonian();
        let z = c(rng.random_range(-1.5..1.5), rng.random_range(0.5..2.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 });
        let lambda = rng.random_range(0.05..0.9) * model.alpha();
        match combes_thomas_check(&h, &bx.sites, z, lambda, model.rho(), &cert) {
            Ok(rep) if rep.fit.passed() => Outcome::Pass,
            Ok(rep) => Outcome::Fail(format!("{} entries above the bound, worst ratio {}", rep.fit.violations.len(), rep.fit.worst_ratio)),
            Err(GreenError::DenominatorNonpositive { .. }) => Outcome::Skip,
            Err(e) => Outcome::Fail(e.to_string()),
        }
    })
}

/// Runs one suite with its own stream derived from `seed`.
pub fn run_suite(suite: Suite, instances: usize, seed: u64) -> SuiteResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (0x5eed_0000 + suite as u64));
    match suite {
        Suite::QuasiMetric => quasi_metric(&mut rng, instances),
        Suite::Extract => extract(&mut rng, instances),
        Suite::Hadamard => hadamard(&mut rng, instances),
        Suite::Schur => schur(&mut rng, instances),
        Suite::DetPerturbation => det_perturbation(&mut rng, instances),
        Suite::Evenness => evenness(&mut rng, instances),
        Suite::CombesThomas => combes_thomas(&mut rng, instances),
    }
}
