use proptest::prelude::*;
use qplab::dynamics::{
    adaptive_simpson, arithmetic_phase_test, evolve_amplitudes, exponential_rule, gauss_laguerre, gauss_legendre, localization_profile, log_grid, moment_green_bound, moment_series, onset_radius,
    sne_bound, sne_check, sne_start_time, time_avg_moment, DynamicsError, EvolutionData, Margins, QuadratureOptions,
};
use qplab::lattice::box_around;
use qplab::linalg::{c, hermitian_eigen, CMat};
use qplab::model::{assemble_restriction, torus_dist, EnergyPoint};
use qplab::{HalfPoint, ModelSpec, Site, C64};

fn rabi(coupling: f64) -> (CMat, Vec<Site>) {
    let h = CMat::from_row_slice(2, 2, &[c(0.0, 0.0), c(coupling, 0.0), c(coupling, 0.0), c(0.0, 0.0)]);
    (h, vec![Site::new(vec![0]), Site::new(vec![1])])
}

fn model_h(eps: f64, radius: f64, theta: f64) -> (CMat, Vec<Site>) {
    let m = ModelSpec::golden_cosine(eps);
    let bx = box_around(&HalfPoint::origin(1), radius).unwrap();
    let r = assemble_restriction(&m, &bx, c(theta, 0.0), EnergyPoint::real(0.0)).unwrap();
    (r.hamiltonian(), bx.sites)
}

fn factorial(k: u32) -> f64 {
    (1..=k).map(f64::from).product()
}

#[test]
fn rabi_amplitude_is_a_sine() {
    let (h, sites) = rabi(0.7);
    let data = EvolutionData::new(&h, sites).unwrap();
    let times = log_grid(0.01, 50.0, 40);
    let table = evolve_amplitudes(&data, &data.delta(0), &times).unwrap();
    for (t, amp) in times.iter().zip(&table.amps) {
        assert!((amp[1].norm() - (0.7 * t).sin().abs()).abs() < 1e-12, "t = {t}");
        assert!((amp[0].norm() - (0.7 * t).cos().abs()).abs() < 1e-12);
    }
    assert!(table.conservation_defect.iter().all(|d| *d < 1e-13));
}

#[test]
fn rabi_moment_closed_form() {
    let (h, sites) = rabi(0.3);
    let data = EvolutionData::new(&h, sites).unwrap();
    let p = 1.5;
    let times = [0.0, 1.0, 2.5, 7.0];
    let series = moment_series(&data, &data.delta(0), p, &times).unwrap();
    for (t, v) in times.iter().zip(&series.values) {
        let s2 = (0.3 * t).sin().powi(2);
        assert!((v - (1.0 - s2 + 2f64.powf(p) * s2)).abs() < 1e-12);
    }
}

#[test]
fn rabi_time_average_closed_form() {
    let cpl = 0.5;
    let (h, sites) = rabi(cpl);
    let data = EvolutionData::new(&h, sites).unwrap();
    for big_t in [1.0, 4.0, 10.0, 100.0, 1000.0] {
        let p = 2.0;
        let avg = time_avg_moment(&data, &data.delta(0), p, big_t, 64).unwrap();
        let ct2 = (cpl * big_t).powi(2);
        let sin2 = ct2 / (2.0 * (1.0 + ct2));
        let want = 1.0 + (2f64.powf(p) - 1.0) * sin2;
        assert!((avg.spectral - want).abs() < 1e-12, "T = {big_t}");
        assert!((avg.quadrature - want).abs() < 1e-6 * want);
    }
}

#[test]
fn laguerre_rule_is_exact_on_polynomials() {
    let (x, w) = gauss_laguerre(12);
    assert_eq!(x.len(), 12);
    assert!(x.windows(2).all(|p| p[0] < p[1]) && x[0] > 0.0);
    for k in 0..=15u32 {
        let q: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(k as i32)).sum();
        assert!((q - factorial(k)).abs() < 1e-9 * factorial(k), "k = {k}: {q}");
    }
}

#[test]
fn legendre_rule_is_exact_on_polynomials() {
    let (x, w) = gauss_legendre(8);
    for k in 0..=15i32 {
        let q: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(k)).sum();
        let want = if k % 2 == 0 { 2.0 / (k + 1) as f64 } else { 0.0 };
        assert!((q - want).abs() < 1e-13, "k = {k}");
    }
}

#[test]
fn exponential_rule_resolves_oscillations() {
    // ∫₀^∞ e^{−u} cos(ωu) du = 1/(1+ω²)
    for omega in [0.1, 3.0, 40.0, 500.0] {
        let (u, w) = exponential_rule(omega, 64);
        let q: f64 = u.iter().zip(&w).map(|(ui, wi)| wi * (omega * ui).cos()).sum();
        let want = 1.0 / (1.0 + omega * omega);
        assert!((q - want).abs() < 1e-9 * want.max(1e-3), "ω = {omega}: {q} vs {want}");
    }
}

#[test]
fn zero_coupling_freezes_the_packet() {
    let (h, sites) = model_h(0.0, 10.0, 0.31);
    let data = EvolutionData::new(&h, sites).unwrap();
    let times = log_grid(0.1, 1e4, 20);
    for p in [0.5, 1.0, 3.0] {
        let s = moment_series(&data, &data.delta(data.initial), p, &times).unwrap();
        assert!(s.values.iter().all(|v| (v - 1.0).abs() < 1e-12));
    }
    let avg = time_avg_moment(&data, &data.delta(data.initial), 2.0, 100.0, 64).unwrap();
    assert!((avg.spectral - 1.0).abs() < 1e-12);
}

#[test]
fn zeroth_moment_is_the_norm() {
    let (h, sites) = model_h(0.05, 12.0, 0.2);
    let data = EvolutionData::new(&h, sites).unwrap();
    let s = moment_series(&data, &data.delta(data.initial), 0.0, &log_grid(1.0, 1e3, 10)).unwrap();
    assert!(s.values.iter().all(|v| (v - 1.0).abs() < 1e-12));
    assert!(data.unitarity_defect < 1e-12 && data.reconstruction_defect < 1e-12);
}

#[test]
fn evolution_rejects_non_hermitian_input() {
    let h = CMat::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
    let err = EvolutionData::new(&h, vec![Site::new(vec![0]), Site::new(vec![1])]).unwrap_err();
    assert!(matches!(err, DynamicsError::NotHermitian { .. }));
    let (h, _) = rabi(1.0);
    assert!(EvolutionData::new(&h, vec![Site::new(vec![0])]).is_err());
}

/// `∫_A^B |G(E + iη)(x, y)|² dE` by partial fractions over the spectral sum.
fn green_integral_exact(h: &CMat, x: usize, y: usize, eta: f64, lo: f64, hi: f64) -> f64 {
    let (vals, u) = hermitian_eigen(h);
    let n = vals.len();
    let a: Vec<C64> = (0..n).map(|j| u[(x, j)] * u[(y, j)].conj()).collect();
    // ∫ dE / (α − E) = ln(α − A) − ln(α − B) for α off the real axis
    let l = |alpha: C64| (alpha - lo).ln() - (alpha - hi).ln();
    let mut total = c(0.0, 0.0);
    for j in 0..n {
        for k in 0..n {
            let alpha = c(vals[j], -eta);
            let beta = c(vals[k], eta);
            total += a[j] * a[k].conj() * (l(alpha) - l(beta)) / (beta - alpha);
        }
    }
    total.re
}

#[test]
fn quadrature_matches_partial_fractions() {
    let (h, sites) = model_h(0.08, 5.0, 0.17);
    let data = EvolutionData::new(&h, sites.clone()).unwrap();
    let model = ModelSpec::golden_cosine(0.08);
    let margins = Margins::from_potential(&model.potential);
    let (lo, hi) = margins.contour();
    let opts = QuadratureOptions { rel_tol: 1e-8, max_solves: 20_000, ..Default::default() };
    for (target, t) in [(data.initial + 1, 5.0), (data.initial + 3, 20.0), (data.initial, 2.0)] {
        let rep = moment_green_bound(&data, &h, target, t, margins, model.alpha(), model.rho(), &opts).unwrap();
        let exact = green_integral_exact(&h, data.initial, target, 1.0 / t, lo, hi);
        assert!((rep.integral.value - exact).abs() <= 1e-6 * exact, "target {target}, t {t}: {} vs {exact}", rep.integral.value);
        assert!(!rep.integral.budget_hit);
        assert!(rep.instant.pass && rep.averaged.pass);
    }
}

#[test]
fn averaged_amplitude_matches_laguerre_quadrature() {
    let (h, sites) = model_h(0.1, 4.0, 0.4);
    let data = EvolutionData::new(&h, sites).unwrap();
    let model = ModelSpec::golden_cosine(0.1);
    let t = 3.0;
    let target = data.initial + 2;
    let rep = moment_green_bound(&data, &h, target, t, Margins::from_potential(&model.potential), 1.0, 2.0, &QuadratureOptions::default()).unwrap();
    let (x, w) = gauss_laguerre(64);
    let times: Vec<f64> = x.iter().map(|xi| xi * t / 2.0).collect();
    let table = evolve_amplitudes(&data, &data.delta(data.initial), &times).unwrap();
    let quad: f64 = table.amps.iter().zip(&w).map(|(a, wi)| wi * a[target].norm_sqr()).sum();
    assert!((rep.averaged.lhs - quad).abs() < 1e-9 * quad.max(1e-12));
}

#[test]
fn moment_bound_rejects_escaping_spectra() {
    let (h, sites) = rabi(3.0);
    let data = EvolutionData::new(&h, sites).unwrap();
    let margins = Margins { a: -1.0, b: 1.0, beta: 0.1 };
    let err = moment_green_bound(&data, &h, 1, 1.0, margins, 1.0, 2.0, &QuadratureOptions::default()).unwrap_err();
    assert!(matches!(err, DynamicsError::SpectrumEscapes { .. }));
    assert!(moment_green_bound(&data, &h, 5, 1.0, margins, 1.0, 2.0, &QuadratureOptions::default()).is_err());
}

#[test]
fn simpson_integrates_smooth_functions() {
    let q = adaptive_simpson(|x| x.sin(), 0.0, std::f64::consts::PI, &QuadratureOptions { rel_tol: 1e-10, ..Default::default() });
    assert!((q.value - 2.0).abs() < 1e-9);
    let tight = adaptive_simpson(|x| 1.0 / (x * x + 1e-6), -1.0, 1.0, &QuadratureOptions { initial_panels: 2, rel_tol: 1e-12, max_solves: 50 });
    assert!(tight.budget_hit);
}

#[test]
fn slow_spreading_bound_values() {
    assert_eq!(sne_bound(0.0, 1e6, 1.5), 1.0);
    assert!((sne_bound(1.0, 1.0, 1.5) - 2.0).abs() < 1e-15);
    let t: f64 = 1e4;
    let want = 2f64.powi(2) * (2.0 * t.ln().powf(0.8)).exp();
    assert!((sne_bound(2.0, t, 1.5) - want).abs() < 1e-9 * want);
    assert_eq!(onset_radius(1.0, 1.5), 1.0);
    assert!((onset_radius(t, 1.5) - t.ln().powf(0.8).exp()).abs() < 1e-12);
    assert!((sne_start_time(0.1, 0.2f64.ln()) - 125.0).abs() < 1e-9);
    assert!((sne_start_time(0.1, 0.9f64.ln()) - 10.0).abs() < 1e-12);
}

#[test]
fn log_grid_endpoints() {
    let g = log_grid(1.0, 1e4, 5);
    assert_eq!(g.len(), 5);
    assert!((g[0] - 1.0).abs() < 1e-12 && (g[4] - 1e4).abs() < 1e-8 && (g[2] - 100.0).abs() < 1e-9);
    assert_eq!(log_grid(3.0, 7.0, 1), vec![3.0]);
}

#[test]
fn zero_coupling_is_below_the_spreading_bound() {
    let (h, sites) = model_h(0.0, 8.0, 0.1);
    let data = EvolutionData::new(&h, sites).unwrap();
    let rep = sne_check(&data, 2.0, &log_grid(10.0, 1e6, 12), 1.5).unwrap();
    assert!(rep.below_bound() && rep.gate_ok);
}

#[test]
fn phase_test_at_zero_finds_the_convergents() {
    let w = (5f64.sqrt() - 1.0) / 2.0;
    let ev = arithmetic_phase_test(0.0, &[w], 1.0, 100).unwrap();
    assert_eq!(ev.checked, 200);
    let brute: Vec<i64> = (-100i64..=100).filter(|&n| n != 0 && torus_dist(n as f64 * w) <= 1.0 / n.abs() as f64).collect();
    assert_eq!(ev.violation_count as usize, brute.len());
    let found: Vec<i64> = ev.violations.iter().map(|v| v.n.0[0]).collect();
    assert_eq!(found, brute);
    // the Fibonacci numbers are all there
    for f in [1i64, 2, 3, 5, 8, 13, 21, 34, 55, 89] {
        assert!(found.contains(&f) && found.contains(&-f), "{f}");
    }
    assert_eq!(ev.largest_violator.unwrap().n.norm(), 89);
}

#[test]
fn phase_on_a_resonant_line_is_caught() {
    let w = (5f64.sqrt() - 1.0) / 2.0;
    let theta = (1.0 - w) / 2.0;
    let ev = arithmetic_phase_test(theta, &[w], 2.0, 50).unwrap();
    let hit = ev.violations.iter().find(|v| v.n.0 == vec![1]).expect("n = 1 violates");
    assert!(hit.distance < 1e-12);
    assert!(arithmetic_phase_test(0.1, &[w], 2.0, 0).is_err());
}

#[test]
fn zero_coupling_eigenvectors_are_sites() {
    let (h, sites) = model_h(0.0, 6.0, 0.23);
    let s = localization_profile(&h, &sites, 2.0, 0.5).unwrap();
    assert_eq!(s.profiles.len(), 13);
    assert!(s.profiles.iter().all(|p| (p.center_mass - 1.0).abs() < 1e-12 && (p.participation - 1.0).abs() < 1e-9));
    assert_eq!(s.fraction_localized, 1.0);
}

#[test]
fn small_coupling_profiles_decay() {
    let (h, sites) = model_h(0.01, 15.0, 0.23);
    let s = localization_profile(&h, &sites, 2.0, 0.5).unwrap();
    assert!(s.median_c.unwrap() > 0.5, "median rate {:?}", s.median_c);
    assert!(s.profiles.iter().all(|p| p.norm_defect < 1e-12));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn moments_grow_with_the_exponent(theta in 0.0f64..1.0, eps in 0.0f64..0.2, t in 0.1f64..1e3) {
        let (h, sites) = model_h(eps, 6.0, theta);
        let data = EvolutionData::new(&h, sites).unwrap();
        let psi = data.delta(data.initial);
        let mut last = 0.0;
        for p in [0.0, 0.5, 1.0, 2.0, 4.0] {
            let v = moment_series(&data, &psi, p, &[t]).unwrap().values[0];
            prop_assert!(v >= last * (1.0 - 1e-12));
            last = v;
        }
    }

    #[test]
    fn evolution_conserves_mass(theta in 0.0f64..1.0, eps in 0.0f64..0.5, t in 0.0f64..1e4) {
        let (h, sites) = model_h(eps, 5.0, theta);
        let data = EvolutionData::new(&h, sites).unwrap();
        let table = evolve_amplitudes(&data, &data.delta(data.initial), &[t]).unwrap();
        prop_assert!(table.conservation_defect[0] < 1e-10);
    }
}
