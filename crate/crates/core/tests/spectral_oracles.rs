mod common;

use common::*;
use gridsync::spectral::{
    eigenvalues, full_spectrum, is_synchronizable_prop1, lambda_max, lambda_max_power, mode_roots,
    rayleigh_estimate, state_spectrum,
};
use gridsync::{comm_laplacian, laplacian, new_england_39, CommPlan, GridParams, SymMatrix};
use proptest::prelude::*;

#[test]
fn random_10x10_matches_jacobi_oracle() {
    let mut r = rng(10);
    for _ in 0..20 {
        let a = random_symmetric(&mut r, 10);
        let s = lambda_max(&a, 1e-12).unwrap();
        assert!((s.lambda_max - oracle_lambda_max(&a)).abs() < 1e-8);
        let norm: f64 = s.top_vector.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-10);
        let av = a.mul_vec(&s.top_vector);
        let res: f64 = av
            .iter()
            .zip(&s.top_vector)
            .map(|(x, y)| (x - s.lambda_max * y).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!(res <= 1e-8 * s.lambda_max.abs().max(1.0));
    }
}

#[test]
fn full_spectrum_matches_oracle_and_trace() {
    let mut r = rng(11);
    for n in [1, 2, 3, 7, 20, 50] {
        let a = random_symmetric(&mut r, n);
        let ours = full_spectrum(&a).unwrap().all_lambdas.unwrap();
        let oracle = jacobi_eigenvalues(&a.rows());
        for (x, y) in ours.iter().zip(&oracle) {
            assert!((x - y).abs() < 1e-9, "n={n}: {x} vs {y}");
        }
        let sum: f64 = ours.iter().sum();
        assert!((sum - a.trace()).abs() < 1e-8 * n as f64);
        assert!(ours.windows(2).all(|w| w[0] <= w[1]));
    }
}

#[test]
fn new_england_trace_identity() {
    let p = GridParams::default();
    let net = new_england_39();
    let a = laplacian(&net).scaled(p.power_coupling());
    let all = full_spectrum(&a).unwrap().all_lambdas.unwrap();
    let sum: f64 = all.iter().sum();
    assert!((sum - p.power_coupling() * 2.0 * 46.0).abs() < 1e-6);
    assert!(all[0] > -1e-10);
}

#[test]
fn power_iteration_on_laplacian_matches_dense() {
    let mut r = rng(12);
    let net = random_connected(&mut r, 30, 0.1);
    let l = laplacian(&net);
    let dense = lambda_max(&l, 1e-12).unwrap().lambda_max;
    let power = lambda_max_power(&l, 1e-11, 10_000_000).unwrap().lambda_max;
    assert!((dense - power).abs() < 1e-8, "{dense} vs {power}");
}

#[test]
fn rayleigh_estimate_is_within_perturbation_norm() {
    let mut r = rng(13);
    for _ in 0..50 {
        let a = random_symmetric(&mut r, 6);
        let delta = random_symmetric(&mut r, 6).scaled(0.01);
        let top = lambda_max(&a, 1e-12).unwrap();
        let est = rayleigh_estimate(&a, &top.top_vector, &delta).unwrap();
        let exact = oracle_lambda_max(&a.lin_comb(1.0, &delta, 1.0).unwrap());
        // ‖Δ‖₂ ≤ max |eigenvalue of Δ|
        let dj = jacobi_eigenvalues(&delta.rows());
        let delta_norm = dj[0].abs().max(dj[5].abs());
        assert!((est - exact).abs() <= delta_norm + 1e-12);
    }
}

#[test]
fn rayleigh_estimate_exact_for_eigenvector_of_sum() {
    let a = SymMatrix::from_diagonal(&[3.0, 1.0, 0.5]);
    let delta = SymMatrix::from_diagonal(&[-0.5, 0.2, 0.0]);
    let est = rayleigh_estimate(&a, &[1.0, 0.0, 0.0], &delta).unwrap();
    assert_eq!(est, 2.5);
}

#[test]
fn prop1_full_comm_clique_on_path() {
    // 4-node path, every generator attached, defaults
    let p = GridParams::default();
    let net = path(4);
    let lp = laplacian(&net);
    let lc = comm_laplacian(&CommPlan::full(4), 4);
    let verdict = is_synchronizable_prop1(&p, &lp, &lc).unwrap();
    let oracle = oracle_lambda_max(&combined_by_hand(&p, &net, &[0, 1, 2, 3]));
    assert!((verdict.lambda_max - oracle).abs() < 1e-10);
    assert_eq!(verdict.threshold, gridsync::sync_threshold(&p));
    assert_eq!(verdict.synchronizable, oracle < verdict.threshold);
}

#[test]
fn prop1_strong_comm_pulls_lambda_to_consensus_floor() {
    // |c_c| large: every disagreement mode is negative, only the 0 of the
    // consensus mode remains, so λ_max sits at 0 and margin = threshold
    let p = GridParams {
        feedback_slope: -50.0,
        ..GridParams::default()
    };
    let net = path(4);
    let lp = laplacian(&net);
    let lc = comm_laplacian(&CommPlan::full(4), 4);
    let verdict = is_synchronizable_prop1(&p, &lp, &lc).unwrap();
    assert!(verdict.lambda_max.abs() < 1e-10);
    assert!(verdict.synchronizable);
    assert!((verdict.margin - verdict.threshold).abs() < 1e-10);
    let direct = state_spectrum(&p, &lp, &lc).unwrap();
    assert!(direct.non_rigid_lambda_max.unwrap() < 0.0);
    assert!(direct.is_synchronizable_direct);
}

#[test]
fn prop1_empty_plan_on_new_england() {
    let p = GridParams::default();
    let net = new_england_39();
    let lp = laplacian(&net);
    let lc = SymMatrix::zeros(39);
    let verdict = is_synchronizable_prop1(&p, &lp, &lc).unwrap();
    let oracle = p.power_coupling() * oracle_lambda_max(&lp);
    assert!((verdict.lambda_max - oracle).abs() < 1e-9);
    assert_eq!(
        verdict.synchronizable,
        oracle < gridsync::sync_threshold(&p)
    );
    assert!(!verdict.synchronizable);
}

#[test]
fn state_spectrum_of_four_cycle_is_unstable() {
    let p = GridParams::default();
    let net = cycle(4);
    let s = state_spectrum(&p, &laplacian(&net), &SymMatrix::zeros(4)).unwrap();
    assert_eq!(s.roots.len(), 8);
    let cp = p.power_coupling();
    assert!((s.lambdas[3] - 4.0 * cp).abs() < 1e-10);
    let expect = (-1.0 + (1.0 + 16.0 * cp).sqrt()) / 2.0;
    assert!((s.abscissa - expect).abs() < 1e-10);
    assert!(s.abscissa > 0.0);
    assert!(!s.is_synchronizable_direct);
}

fn small_params() -> impl Strategy<Value = GridParams> {
    (
        0.1f64..5.0,
        0.1f64..5.0,
        -5.0f64..-0.01,
        0.5f64..2.0,
        0.0f64..0.5,
        0.01f64..1.0,
    )
        .prop_map(|(m, d, h, v, r, x)| GridParams {
            inertia: m,
            damping: d,
            feedback_slope: h,
            voltage: v,
            resistance: r,
            reactance: x,
            shunt_conductance: 0.0,
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn vieta_identities(p in small_params(), lambda in -20.0f64..20.0) {
        let r = mode_roots(&p, lambda);
        let sum = r.phi1 + r.phi2;
        let prod = r.phi1 * r.phi2;
        let bracket = p.feedback_slope
            + p.voltage * p.voltage * p.reactance * p.inertia * lambda / p.impedance_sq();
        let scale = 1.0f64.max(bracket.abs() / p.inertia).max(p.damping / p.inertia);
        prop_assert!((sum.re + p.damping / p.inertia).abs() < 1e-10 * scale);
        prop_assert!(sum.im.abs() < 1e-10 * scale);
        prop_assert!((prod.re + bracket / p.inertia).abs() < 1e-10 * scale * scale);
        prop_assert!(prod.im.abs() < 1e-10 * scale * scale);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lambda_max_is_max_of_spectrum(seed in any::<u64>(), n in 1usize..=50) {
        let a = random_symmetric(&mut rng(seed), n);
        let top = lambda_max(&a, 1e-12).unwrap().lambda_max;
        let all = eigenvalues(&a).unwrap();
        prop_assert!((top - all[n - 1]).abs() < 1e-9);
    }

    #[test]
    fn shift_equivariance(seed in any::<u64>(), n in 1usize..=30, c in -10.0f64..10.0) {
        let a = random_symmetric(&mut rng(seed), n);
        let base = lambda_max(&a, 1e-12).unwrap().lambda_max;
        let shifted = lambda_max(&a.shifted(c), 1e-12).unwrap().lambda_max;
        prop_assert!((shifted - (base + c)).abs() < 1e-9);
    }

    #[test]
    fn state_spectrum_pairs_with_quadratic_roots(seed in any::<u64>(), n in 2usize..=12) {
        let mut r = rng(seed);
        let net = random_connected(&mut r, n, 0.3);
        let p = GridParams::default();
        let members: Vec<usize> = (0..n).filter(|i| i % 2 == 0).collect();
        let lc = comm_laplacian(&plan(&members, n), n);
        let s = state_spectrum(&p, &laplacian(&net), &lc).unwrap();
        prop_assert_eq!(s.roots.len(), 2 * n);
        let dm = p.damping / p.inertia;
        for (k, lam) in s.lambdas.iter().enumerate() {
            for phi in &s.roots[2 * k..2 * k + 2] {
                let resid = phi * phi + phi * dm - lam;
                prop_assert!(resid.norm() < 1e-8);
            }
        }
    }

    #[test]
    fn laplacian_is_psd_with_zero_row_sums(seed in any::<u64>(), n in 2usize..=20) {
        let net = random_connected(&mut rng(seed), n, 0.2);
        let l = laplacian(&net);
        prop_assert!(l.row_sums().iter().all(|s| s.abs() <= 1e-12));
        prop_assert!(eigenvalues(&l).unwrap()[0] >= -1e-10);
    }

    #[test]
    fn clique_top_eigenvalue_is_its_size(n in 2usize..=25, k in 2usize..=25) {
        prop_assume!(k <= n);
        let lc = comm_laplacian(&CommPlan::full(k), n);
        let top = lambda_max(&lc, 1e-12).unwrap().lambda_max;
        prop_assert!((top - k as f64).abs() < 1e-9);
    }
}
