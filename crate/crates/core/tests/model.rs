use std::f64::consts::PI;
use std::sync::Arc;

use proptest::prelude::*;
use qplab::lattice::box_around;
use qplab::linalg::{c, hermitian_eigen};
use qplab::model::{
    assemble_doubled, assemble_on_sites, assemble_restriction, certify_diophantine, certify_morse, eval_potential, hopping_weight, potential_preimage,
    spectrum_bounds, torus_dist, torus_norm, write_matrix_csv, CustomHopping, EnergyPoint, FrequencyVector, HoppingKernel, HoppingProfile, ModelError,
    PotentialSpec,
};
use qplab::{HalfPoint, ModelSpec, Site};

#[test]
fn torus_distance_examples() {
    assert_eq!(torus_dist(0.25), 0.25);
    assert!((torus_dist(2.9) - 0.1).abs() < 1e-12);
    assert!((torus_dist(-0.7) - 0.3).abs() < 1e-12);
    assert!((torus_norm(c(1.3, 0.4)) - 0.5).abs() < 1e-12);
}

#[test]
fn preimage_solves_the_level_equation() {
    let spec = PotentialSpec::cosine();
    for e in [-0.99, -0.5, 0.0, 0.3, 0.97] {
        let t = potential_preimage(&spec, c(e, 0.0)).unwrap();
        assert!((spec.value(t) - e).norm() < 1e-13, "E = {e}");
        assert!(t.im.abs() < 1e-14 && (0.0..=0.5).contains(&t.re));
        assert!((t.re - e.acos() / (2.0 * PI)).abs() < 1e-15);
    }
    let e = c(0.2, 0.05);
    let t = potential_preimage(&spec, e).unwrap();
    assert!((spec.value(t) - e).norm() < 1e-13);
}

#[test]
fn preimage_outside_the_strip_is_rejected() {
    // cos(2πz) = 20 needs |Im z| = acosh(20)/2π ≈ 0.59 > 1/2
    let err = potential_preimage(&PotentialSpec::cosine(), c(20.0, 0.0)).unwrap_err();
    assert!(matches!(err, ModelError::OutOfStrip { .. }));
    assert!(matches!(potential_preimage(&PotentialSpec::zero(), c(0.0, 0.0)), Err(ModelError::NoPreimage(_))));
    assert!(eval_potential(&PotentialSpec::cosine(), c(0.0, 0.6)).is_err());
}

#[test]
fn morse_constants_of_the_cosine() {
    // |cos 2πx − cos 2πy| = 2|sin π(x+y)||sin π(x−y)| and 2‖t‖ ≤ |sin πt| ≤ π‖t‖
    let cert = certify_morse(&PotentialSpec::cosine(), 64, 0.0).unwrap();
    assert!((cert.kappa1 - 8.0).abs() < 1e-9, "κ₁ = {}", cert.kappa1);
    assert!(cert.kappa2 <= 2.0 * PI * PI + 1e-9);
    assert!(cert.kappa2 > 0.95 * 2.0 * PI * PI);
    assert_eq!(cert.pairs_checked, 64 * 63 / 2 - 31);
}

#[test]
fn morse_certificate_rejects_the_zero_potential() {
    assert!(matches!(certify_morse(&PotentialSpec::zero(), 16, 0.0), Err(ModelError::DegenerateRatio { .. })));
    assert!(certify_morse(&PotentialSpec::cosine(), 8, 0.0).is_err());
    assert!(certify_morse(&PotentialSpec::cosine(), 16, 0.7).is_err());
}

#[test]
fn golden_mean_is_diophantine() {
    let w = FrequencyVector::golden();
    let cert = certify_diophantine(&w.omega, w.tau, w.gamma, 2000).unwrap();
    assert_eq!(cert.checked, 2000);
    // independent scan of ‖nω‖ n² / γ
    let worst = (1..=2000i64).map(|n| torus_dist(n as f64 * w.omega[0]) * (n as f64).powi(2) / w.gamma).fold(f64::INFINITY, f64::min);
    assert!((cert.worst_margin - worst).abs() < 1e-12 * worst);
    assert!(cert.worst_margin >= 1.0);
}

#[test]
fn rational_frequency_fails_the_certificate() {
    let err = certify_diophantine(&[0.4], 2.0, 0.01, 10).unwrap_err();
    match err {
        ModelError::Violation { n, distance, .. } => {
            assert_eq!(n, vec![5]);
            assert!(distance < 1e-12);
        }
        other => panic!("unexpected {other:?}"),
    }
    let err = certify_diophantine(&[0.5, 0.25], 3.0, 0.01, 4).unwrap_err();
    assert!(matches!(err, ModelError::Violation { ref n, .. } if n.iter().map(|x| x.abs()).max() == Some(2)));
}

#[test]
fn hopping_weights_follow_the_envelope() {
    let k = HoppingKernel::saturating(1.0, 2.0);
    assert_eq!(hopping_weight(&k, &[0]).unwrap(), c(0.0, 0.0));
    let w = hopping_weight(&k, &[3]).unwrap();
    assert!((w.re - (-(4f64.ln()).powi(2)).exp()).abs() < 1e-15);
    assert_eq!(hopping_weight(&k, &[-3]).unwrap(), w);
    assert!(k.check_on_box(2, 6).is_ok());
}

#[test]
fn twisted_hopping_is_hermitian_but_not_symmetric() {
    let k = HoppingKernel { alpha: 1.0, rho: 2.0, profile: HoppingProfile::Twisted { scale: 1.0, twist: vec![0.2] }, hermitian: true };
    assert!(!k.is_symmetric());
    assert!(k.check_on_box(1, 8).is_ok());
    let w = k.raw(&[2]);
    assert!((k.raw(&[-2]) - w.conj()).norm() < 1e-15);
}

#[test]
fn bad_custom_hopping_is_rejected() {
    let origin = HoppingKernel {
        alpha: 1.0,
        rho: 2.0,
        profile: HoppingProfile::Custom(CustomHopping { name: "diag".into(), eval: Arc::new(|_| c(0.1, 0.0)) }),
        hermitian: true,
    };
    assert!(matches!(hopping_weight(&origin, &[0]), Err(ModelError::NonzeroOrigin(_))));
    let heavy = HoppingKernel {
        alpha: 1.0,
        rho: 2.0,
        profile: HoppingProfile::Custom(CustomHopping { name: "flat".into(), eval: Arc::new(|n| if n[0] == 0 { c(0.0, 0.0) } else { c(1.0, 0.0) }) }),
        hermitian: true,
    };
    assert!(matches!(hopping_weight(&heavy, &[1]), Err(ModelError::DecayViolation { .. })));
    let skew = HoppingKernel {
        alpha: 1.0,
        rho: 2.0,
        profile: HoppingProfile::Custom(CustomHopping { name: "skew".into(), eval: Arc::new(|n| if n[0] > 0 { c(0.0, 0.1) } else { c(0.0, 0.0) }) }),
        hermitian: true,
    };
    assert!(matches!(skew.check_on_box(1, 2), Err(ModelError::HermitianFlag(_))));
}

#[test]
fn model_validation() {
    let m = ModelSpec::golden_cosine(1e-3);
    let warnings = m.validate().unwrap();
    assert_eq!(warnings.len(), 1);
    let mut bad = m.clone();
    bad.rho_prime = 2.5;
    assert!(bad.validate().is_err());
    let mut bad = m.clone();
    bad.frequency.tau = 0.5;
    assert!(bad.validate().is_err());
    let mut big = m;
    big.epsilon = 0.5;
    assert!(big.validate().unwrap().iter().any(|w| w.contains("exceeds")));
}

#[test]
fn zero_coupling_gives_the_potential_diagonal() {
    let m = ModelSpec::golden_cosine(0.0);
    let bx = box_around(&HalfPoint::origin(1), 12.0).unwrap();
    let (theta, e) = (0.137, 0.25);
    let r = assemble_restriction(&m, &bx, c(theta, 0.0), EnergyPoint::real(e)).unwrap();
    let w = m.frequency.omega[0];
    for (i, si) in bx.sites.iter().enumerate() {
        for j in 0..bx.len() {
            let want = if i == j { (2.0 * PI * (theta + si.0[0] as f64 * w)).cos() - e } else { 0.0 };
            assert!((r.matrix[(i, j)] - want).norm() < 1e-14);
        }
    }
}

#[test]
fn real_phase_gives_a_hermitian_restriction() {
    let m = ModelSpec::golden_cosine(0.01);
    let bx = box_around(&HalfPoint::origin(2), 3.0).unwrap();
    let mut m2 = m.clone();
    m2.dim = 2;
    m2.frequency = FrequencyVector::uncertified(vec![0.618_033_988_749_895, 0.414_213_562_373_095], 3.0, 0.05);
    let r = assemble_restriction(&m2, &bx, c(0.3, 0.0), EnergyPoint::real(0.0)).unwrap();
    assert!(r.hermitian);
    assert_eq!(r.hermitian_defect, 0.0);
    let sb = spectrum_bounds(&r).unwrap();
    assert!(sb.contained, "{sb:?}");
    let complex = assemble_restriction(&m, &box_around(&HalfPoint::origin(1), 4.0).unwrap(), c(0.3, 0.1), EnergyPoint::real(0.0)).unwrap();
    assert!(!complex.hermitian);
    assert!(matches!(spectrum_bounds(&complex), Err(ModelError::NotHermitian { .. })));
}

#[test]
fn hamiltonian_adds_back_the_energy() {
    let m = ModelSpec::golden_cosine(0.02);
    let bx = box_around(&HalfPoint::origin(1), 5.0).unwrap();
    let a = assemble_restriction(&m, &bx, c(0.4, 0.0), EnergyPoint::real(0.7)).unwrap();
    let b = assemble_restriction(&m, &bx, c(0.4, 0.0), EnergyPoint::real(-0.2)).unwrap();
    assert!((a.hamiltonian() - b.hamiltonian()).iter().all(|z| z.norm() < 1e-15));
}

#[test]
fn assembly_guards() {
    let mut m = ModelSpec::golden_cosine(0.01);
    m.dense_cap = 10;
    let bx = box_around(&HalfPoint::origin(1), 8.0).unwrap();
    assert!(matches!(assemble_restriction(&m, &bx, c(0.0, 0.0), EnergyPoint::real(0.0)), Err(ModelError::BoxTooLarge { sites: 17, cap: 10 })));
    let m = ModelSpec::golden_cosine(0.01);
    assert!(matches!(assemble_restriction(&m, &bx, c(0.0, 0.8), EnergyPoint::real(0.0)), Err(ModelError::OutOfStrip { .. })));
    assert!(assemble_on_sites(&m, &[Site::new(vec![0, 0])], c(0.0, 0.0), EnergyPoint::real(0.0)).is_err());
    assert!(assemble_doubled(&m, &[vec![0], vec![1]], c(0.0, 0.0), c(0.0, 0.0)).is_err());
}

#[test]
fn half_integer_points_shift_the_phase() {
    let m = ModelSpec::golden_cosine(0.0);
    let mat = assemble_doubled(&m, &[vec![1], vec![-1]], c(0.1, 0.0), c(0.0, 0.0)).unwrap();
    let w = m.frequency.omega[0];
    assert!((mat[(0, 0)].re - (2.0 * PI * (0.1 + w / 2.0)).cos()).abs() < 1e-14);
    assert!((mat[(1, 1)].re - (2.0 * PI * (0.1 - w / 2.0)).cos()).abs() < 1e-14);
}

#[test]
fn matrix_csv_layout() {
    let m = ModelSpec::golden_cosine(0.0);
    let bx = box_around(&HalfPoint::origin(1), 1.0).unwrap();
    let r = assemble_restriction(&m, &bx, c(0.0, 0.0), EnergyPoint::real(0.0)).unwrap();
    let mut buf = Vec::new();
    write_matrix_csv(&r, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "row_site,col_site,re,im");
    assert_eq!(lines.len(), 10);
}

proptest! {
    #[test]
    fn spectrum_shifts_with_energy(theta in 0.0f64..1.0, eps in 0.0f64..0.05) {
        let m = ModelSpec::golden_cosine(eps);
        let bx = box_around(&HalfPoint::origin(1), 6.0).unwrap();
        let r = assemble_restriction(&m, &bx, c(theta, 0.0), EnergyPoint::real(0.0)).unwrap();
        let (vals, _) = hermitian_eigen(&r.hamiltonian());
        // Weyl: eigenvalues stay within ε Σ|φ| of the diagonal values
        let row: f64 = (1..=12).map(|n| 2.0 * m.hopping.envelope(n)).sum();
        let mut diag: Vec<f64> = bx.sites.iter().map(|s| (2.0 * PI * (theta + s.0[0] as f64 * m.frequency.omega[0])).cos()).collect();
        diag.sort_by(f64::total_cmp);
        for (v, d) in vals.iter().zip(&diag) {
            prop_assert!((v - d).abs() <= eps * row + 1e-12);
        }
    }

    #[test]
    fn preimage_roundtrip(e in -0.999f64..0.999, im in -0.3f64..0.3) {
        let spec = PotentialSpec::cosine();
        let t = potential_preimage(&spec, c(e, im)).unwrap();
        prop_assert!((spec.value(t) - c(e, im)).norm() < 1e-12);
    }
}
