use proptest::prelude::*;
use qplab::greens::{
    combes_thomas_check, decay_scan, det_perturbation_bound, determinant_evenness_check, diagonal_inverse, fit_line, green_solve, hadamard_adjugate_bound,
    neumann_inverse, schur_complement, schur_only, GreenError,
};
use qplab::lattice::{box_around, quasi_metric_certify};
use qplab::linalg::{c, random_disk_matrix, CMat};
use qplab::model::{assemble_restriction, EnergyPoint, HoppingKernel, HoppingProfile};
use qplab::{HalfPoint, ModelSpec, C64};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Leibniz expansion, independent of any factorization.
fn det_leibniz(m: &CMat) -> C64 {
    fn go(m: &CMat, row: usize, used: &mut Vec<bool>, sign: f64) -> C64 {
        let n = m.nrows();
        if row == n {
            return c(sign, 0.0);
        }
        let mut acc = c(0.0, 0.0);
        let mut inversions_before = 0;
        for col in 0..n {
            if used[col] {
                continue;
            }
            // columns still free to the left of `col` flip the sign once each
            let s = if inversions_before % 2 == 0 { sign } else { -sign };
            used[col] = true;
            acc += m[(row, col)] * go(m, row + 1, used, s);
            used[col] = false;
            inversions_before += 1;
        }
        acc
    }
    go(m, 0, &mut vec![false; m.nrows()], 1.0)
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[test]
fn leibniz_oracle_sanity() {
    let m = CMat::from_row_slice(3, 3, &[c(2.0, 0.0), c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(3.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0), c(4.0, 0.0)]);
    // 2·12 − 0 + 1·1 = 25
    assert!((det_leibniz(&m) - c(25.0, 0.0)).norm() < 1e-12);
}

#[test]
fn schur_of_a_two_by_two() {
    let m = CMat::from_row_slice(2, 2, &[c(2.0, 0.0), c(1.0, 1.0), c(0.5, 0.0), c(3.0, -1.0)]);
    let d = schur_complement(&m, &[0], &[1]).unwrap();
    let want = c(3.0, -1.0) - c(0.5, 0.0) * c(1.0, 1.0) / c(2.0, 0.0);
    assert!((d.s[(0, 0)] - want).norm() < 1e-15);
    assert!(d.factorization_holds());
    assert!((d.det_m - det_leibniz(&m)).norm() < 1e-13);
    let s = schur_only(&m, &[0], &[1]).unwrap();
    assert!((s[(0, 0)] - want).norm() < 1e-15);
}

#[test]
fn schur_factorization_against_leibniz() {
    let mut r = rng(3);
    for n in 2..=6 {
        let m = random_disk_matrix(&mut r, n) * c(2.0, 0.0);
        let l1: Vec<usize> = (0..n).step_by(2).collect();
        let l2: Vec<usize> = (1..n).step_by(2).collect();
        let d = schur_complement(&m, &l1, &l2).unwrap();
        let a = det_leibniz(&d.a);
        let s = if d.s.nrows() == 0 { c(1.0, 0.0) } else { det_leibniz(&d.s) };
        let full = det_leibniz(&m);
        assert!((a * s - full).norm() <= 1e-10 * full.norm().max(1.0), "n = {n}");
        assert!(d.sandwich_holds());
    }
}

#[test]
fn schur_rejects_bad_partitions() {
    let m = CMat::identity(3, 3);
    assert!(matches!(schur_complement(&m, &[0, 1], &[1, 2]), Err(GreenError::InvalidInput(_))));
    assert!(matches!(schur_complement(&m, &[0], &[1]), Err(GreenError::InvalidInput(_))));
    assert!(matches!(schur_complement(&m, &[], &[0, 1, 2]), Err(GreenError::InvalidInput(_))));
    let mut sing = CMat::identity(3, 3);
    sing[(0, 0)] = c(0.0, 0.0);
    assert!(matches!(schur_complement(&sing, &[0], &[1, 2]), Err(GreenError::ASingular { .. })));
}

#[test]
fn adjugate_of_a_diagonal_matrix() {
    let m = CMat::from_diagonal(&nalgebra::DVector::from_vec(vec![c(2.0, 0.0), c(3.0, 0.0), c(4.0, 0.0)]));
    let r = hadamard_adjugate_bound(&m);
    assert_eq!(r.bound, 16.0);
    assert!((r.max_adjugate.unwrap() - 12.0).abs() < 1e-12);
    assert!(r.holds);
    let big = CMat::identity(9, 9);
    let r = hadamard_adjugate_bound(&big);
    assert_eq!(r.max_adjugate, None);
    assert!(r.holds);
}

#[test]
fn adjugate_inverts_up_to_the_determinant() {
    let mut r = rng(11);
    for n in 1..=5 {
        let m = random_disk_matrix(&mut r, n);
        let adj = qplab::linalg::adjugate_cofactor(&m);
        let prod = &adj * &m;
        let det = det_leibniz(&m);
        for i in 0..n {
            for j in 0..n {
                let want = if i == j { det } else { c(0.0, 0.0) };
                assert!((prod[(i, j)] - want).norm() < 1e-12);
            }
        }
    }
}

#[test]
fn det_perturbation_of_the_identity() {
    for n in 1..=6 {
        let eps = 0.01;
        let a = CMat::identity(n, n);
        let b = CMat::identity(n, n) * c(eps, 0.0);
        let r = det_perturbation_bound(&a, &b).unwrap();
        let exact = (1.0 + eps).powi(n as i32) - 1.0;
        assert!((r.difference - exact).abs() < 1e-13);
        assert!((r.bound - eps * (n * n) as f64 * (1.0 + eps).powi(n as i32 - 1)).abs() < 1e-13);
        assert!(r.holds);
    }
    assert!(det_perturbation_bound(&CMat::identity(2, 2), &CMat::identity(3, 3)).is_err());
}

#[test]
fn neumann_matches_the_direct_inverse() {
    let mut r = rng(5);
    let n = 7;
    let d = CMat::from_diagonal(&nalgebra::DVector::from_fn(n, |i, _| c(1.0 + i as f64, 0.3)));
    let p = random_disk_matrix(&mut r, n) * c(0.05, 0.0);
    let inv = neumann_inverse(&d, &p, 200).unwrap();
    assert!(inv.contraction < 1.0);
    assert!(inv.direct_difference < 1e-12);
    assert!(inv.direct_difference <= inv.remainder_bound + 1e-12);
    let big = random_disk_matrix(&mut r, n) * c(50.0, 0.0);
    assert!(matches!(neumann_inverse(&d, &big, 50), Err(GreenError::NotContractive { .. })));
}

#[test]
fn neumann_with_zero_perturbation_is_one_term() {
    let d = CMat::identity(3, 3) * c(2.0, 0.0);
    let inv = neumann_inverse(&d, &CMat::zeros(3, 3), 10).unwrap();
    assert_eq!(inv.terms, 1);
    assert_eq!(inv.remainder_bound, 0.0);
}

#[test]
fn zero_coupling_green_is_diagonal() {
    let m = ModelSpec::golden_cosine(0.0);
    let bx = box_around(&HalfPoint::origin(1), 10.0).unwrap();
    let r = assemble_restriction(&m, &bx, c(0.21, 0.0), EnergyPoint::real(0.05)).unwrap();
    let g = green_solve(&r).unwrap();
    let diag: Vec<C64> = (0..r.len()).map(|i| r.matrix[(i, i)]).collect();
    let want = diagonal_inverse(&diag);
    assert!((&g.inverse - want).iter().all(|z| z.norm() < 1e-12));
    let fit = decay_scan(&g, 5.0, 2.0, 0.0);
    assert!(fit.passed());
    assert_eq!(fit.pairs.len(), 21 * 20);
    assert!(fit.pairs.iter().all(|p| p.modulus == 0.0));
}

#[test]
fn exact_resonance_is_singular() {
    let m = ModelSpec::golden_cosine(0.0);
    let bx = box_around(&HalfPoint::origin(1), 3.0).unwrap();
    let theta = 0.1;
    let e = (2.0 * std::f64::consts::PI * theta).cos();
    let r = assemble_restriction(&m, &bx, c(theta, 0.0), EnergyPoint::real(e)).unwrap();
    assert!(matches!(green_solve(&r), Err(GreenError::Singular { .. })));
}

#[test]
fn green_inverts_a_coupled_restriction() {
    let m = ModelSpec::golden_cosine(0.02);
    let bx = box_around(&HalfPoint::origin(1), 15.0).unwrap();
    let r = assemble_restriction(&m, &bx, c(0.3, 0.05), EnergyPoint::real(0.1)).unwrap();
    let g = green_solve(&r).unwrap();
    let prod = &r.matrix * &g.inverse;
    let n = r.len();
    let dev = (prod - CMat::identity(n, n)).iter().map(|z| z.norm()).fold(0.0, f64::max);
    assert!(dev < 1e-10);
    let exact = g.exact_norm();
    assert!(g.op_norm <= exact * (1.0 + 1e-9) && g.op_norm >= 0.9 * exact);
}

#[test]
fn decay_csv_header() {
    let m = ModelSpec::golden_cosine(0.01);
    let bx = box_around(&HalfPoint::origin(1), 2.0).unwrap();
    let r = assemble_restriction(&m, &bx, c(0.3, 0.2), EnergyPoint::real(0.0)).unwrap();
    let fit = decay_scan(&green_solve(&r).unwrap(), 1.0, 2.0, 1.0);
    let mut buf = Vec::new();
    fit.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("x,y,dist,modulus,bound,pass\n"));
    assert_eq!(text.lines().count(), 1 + fit.pairs.len());
    assert!(fit.pairs.iter().all(|p| p.dist > 1));
}

#[test]
fn line_fit_recovers_a_line() {
    let pts: Vec<(f64, f64)> = (0..10).map(|i| (i as f64, 3.0 - 0.5 * i as f64)).collect();
    let (slope, b) = fit_line(&pts).unwrap();
    assert!((slope + 0.5).abs() < 1e-12 && (b - 3.0).abs() < 1e-12);
    assert_eq!(fit_line(&[(1.0, 2.0), (1.0, 3.0)]), None);
}

#[test]
fn determinant_is_even_for_symmetric_hopping() {
    let m = ModelSpec::golden_cosine(0.05);
    for sites in [(-3..=3).map(|k| HalfPoint::from_twice(vec![2 * k])).collect::<Vec<_>>(), (-3..3).map(|k| HalfPoint::from_twice(vec![2 * k + 1])).collect()] {
        let r = determinant_evenness_check(&m, &sites, c(0.17, 0.08), c(0.3, 0.0)).unwrap();
        assert!(r.holds && r.symmetric_hopping, "defect {}", r.defect);
    }
}

#[test]
fn twisted_hopping_is_a_gauge_of_the_symmetric_one() {
    // φ(n)e^{2πi t·n} = U W U* with U diagonal, so the determinant does not see the twist
    let plain = ModelSpec::golden_cosine(0.2);
    let mut m = plain.clone();
    m.hopping = HoppingKernel { alpha: 1.0, rho: 2.0, profile: HoppingProfile::Twisted { scale: 1.0, twist: vec![0.25] }, hermitian: true };
    let sites: Vec<HalfPoint> = (-2..=2).map(|k| HalfPoint::from_twice(vec![2 * k])).collect();
    let z = c(0.17, 0.05);
    let r = determinant_evenness_check(&m, &sites, z, c(0.3, 0.0)).unwrap();
    let base = determinant_evenness_check(&plain, &sites, z, c(0.3, 0.0)).unwrap();
    assert!(!r.symmetric_hopping);
    assert!(r.holds);
    assert!((r.det_plus - base.det_plus).norm() < 1e-12 * base.det_plus.norm().max(1.0));
}

#[test]
fn evenness_needs_a_symmetric_set() {
    let m = ModelSpec::golden_cosine(0.05);
    let sites: Vec<HalfPoint> = (0..3).map(|k| HalfPoint::from_twice(vec![2 * k])).collect();
    assert!(matches!(determinant_evenness_check(&m, &sites, c(0.1, 0.0), c(0.0, 0.0)), Err(GreenError::AsymmetricBox)));
}

#[test]
fn combes_thomas_far_from_the_spectrum() {
    let cert = quasi_metric_certify(2.0, 2, 500, 1).unwrap();
    let m = ModelSpec::golden_cosine(0.01);
    let bx = box_around(&HalfPoint::origin(1), 8.0).unwrap();
    let h = assemble_restriction(&m, &bx, c(0.4, 0.0), EnergyPoint::real(0.0)).unwrap().hamiltonian();
    let rep = combes_thomas_check(&h, &bx.sites, c(0.0, 1.0), 0.5, 2.0, &cert).unwrap();
    assert!(rep.fit.passed(), "worst ratio {}", rep.fit.worst_ratio);
    assert!(rep.dist_to_spectrum >= 1.0 - 1e-12);
    let err = combes_thomas_check(&h, &bx.sites, c(0.0, 1e-3), 0.5, 2.0, &cert).unwrap_err();
    assert!(matches!(err, GreenError::DenominatorNonpositive { .. }));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn schur_factorization_on_random_splits(seed in any::<u64>(), n in 2usize..8, k in 1usize..7) {
        let k = k.min(n - 1);
        let m = random_disk_matrix(&mut rng(seed), n) * c(3.0, 0.0);
        let l1: Vec<usize> = (0..k).collect();
        let l2: Vec<usize> = (k..n).collect();
        match schur_complement(&m, &l1, &l2) {
            Ok(d) => {
                prop_assert!(d.factorization_holds(), "defect {}", d.factorization_defect);
                prop_assert!(d.sandwich_holds());
            }
            Err(GreenError::ASingular { .. }) => {}
            Err(e) => prop_assert!(false, "{e}"),
        }
    }

    #[test]
    fn hadamard_on_random_matrices(seed in any::<u64>(), n in 1usize..9) {
        let m = random_disk_matrix(&mut rng(seed), n);
        prop_assert!(hadamard_adjugate_bound(&m).holds);
    }

    #[test]
    fn det_perturbation_on_random_matrices(seed in any::<u64>(), n in 1usize..9, scale in 1e-8f64..1.0) {
        let mut r = rng(seed);
        let a = random_disk_matrix(&mut r, n);
        let b = random_disk_matrix(&mut r, n) * c(scale, 0.0);
        prop_assert!(det_perturbation_bound(&a, &b).unwrap().holds);
    }
}
