//! End-to-end behavior of the clustering pipeline on generated data.

use proptest::prelude::*;

use unionclust::baselines::{run_omp_pipeline, OmpConfig};
use unionclust::datagen::{generate, make_dataset, make_subspaces, SynthConfig};
use unionclust::eval::clustering_error;
use unionclust::neighbors::{select_all, select_neighborhood, TscConfig};
use unionclust::numerics::RealMatrix;
use unionclust::spectral::{run_pipeline, OrderMode, SpectralConfig};
use unionclust::Dataset;

fn small_model(seed: u64) -> SynthConfig {
    SynthConfig {
        m: 50,
        num_subspaces: 3,
        d: 5,
        shared_dims: 0,
        n_per_subspace: 50,
        noise_var: 0.0,
        seed,
    }
}

#[test]
fn noiseless_recovery_with_given_l() {
    let (_, x) = generate(&small_model(3)).unwrap();
    let r = run_pipeline(
        &x,
        &TscConfig::modified(0.0),
        &SpectralConfig::with_given_l(3, 1),
    )
    .unwrap();
    assert_eq!(
        clustering_error(&r.predicted_labels, x.labels.as_ref().unwrap()).unwrap(),
        0.0
    );
    assert!(r.neighborhood_sizes.iter().all(|&q| q == 5));
    assert_eq!(r.truncated_count, 0);
    let diag = r.diagnostics.unwrap();
    assert_eq!(diag.false_connection_count, 0);
    assert!(diag.exact_component_match);
}

#[test]
fn noiseless_recovery_estimates_number_of_subspaces() {
    let (_, x) = generate(&small_model(4)).unwrap();
    for mode in [OrderMode::ZeroCount, OrderMode::Eigengap] {
        // Sparse within-cluster graphs leave larger gaps deep in the spectrum
        // than at position 3, so the eigengap scan is bounded.
        let cfg = SpectralConfig {
            order_mode: mode,
            max_l_scan: Some(8),
            seed: 2,
            ..Default::default()
        };
        let r = run_pipeline(&x, &TscConfig::modified(0.0), &cfg).unwrap();
        assert_eq!(r.l_hat, 3, "{mode:?}");
        assert_eq!(r.estimator_used, mode);
        assert_eq!(
            clustering_error(&r.predicted_labels, x.labels.as_ref().unwrap()).unwrap(),
            0.0
        );
    }
}

#[test]
fn unbounded_eigengap_scan_can_overshoot() {
    let (_, x) = generate(&small_model(4)).unwrap();
    let cfg = SpectralConfig {
        order_mode: OrderMode::Eigengap,
        seed: 2,
        ..Default::default()
    };
    let r = run_pipeline(&x, &TscConfig::modified(0.0), &cfg).unwrap();
    assert!(r.l_hat > 3);
}

#[test]
fn omp_baseline_recovers_noiseless_subspaces() {
    let (_, x) = generate(&small_model(5)).unwrap();
    let r = run_omp_pipeline(
        &x,
        &OmpConfig::with_max_iters(5),
        &SpectralConfig::with_given_l(3, 1),
    )
    .unwrap();
    assert_eq!(
        clustering_error(&r.predicted_labels, x.labels.as_ref().unwrap()).unwrap(),
        0.0
    );
}

#[test]
fn noisy_data_still_beats_chance() {
    let cfg = SynthConfig {
        noise_var: 0.1,
        ..small_model(6)
    };
    let (_, x) = generate(&cfg).unwrap();
    let r = run_pipeline(
        &x,
        &TscConfig::modified(0.3),
        &SpectralConfig::with_given_l(3, 1),
    )
    .unwrap();
    assert!(clustering_error(&r.predicted_labels, x.labels.as_ref().unwrap()).unwrap() < 0.1);
}

fn permuted(x: &Dataset, perm: &[usize]) -> Dataset {
    let labels = x
        .labels
        .as_ref()
        .map(|l| perm.iter().map(|&p| l[p]).collect());
    Dataset::new(x.points.select_columns(perm), labels).unwrap()
}

fn flipped(x: &Dataset, flip: &[bool]) -> Dataset {
    let cols: Vec<Vec<f64>> = (0..x.len())
        .map(|j| {
            let s = if flip[j] { -1.0 } else { 1.0 };
            x.point(j).iter().map(|v| s * v).collect()
        })
        .collect();
    Dataset::new(RealMatrix::from_columns(&cols).unwrap(), x.labels.clone()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn neighborhoods_are_permutation_equivariant(seed in 0u64..1000, rot in 1usize..20) {
        let model = make_subspaces(&SynthConfig { m: 12, d: 3, num_subspaces: 2, ..small_model(seed) }).unwrap();
        let x = make_dataset(&model, &[10, 10], 0.0, seed).unwrap();
        let n = x.len();
        let perm: Vec<usize> = (0..n).map(|i| (i * 7 + rot) % n).collect();
        let y = permuted(&x, &perm);
        let cfg = TscConfig::modified(0.0);
        let rx = select_all(&x, &cfg).unwrap();
        let ry = select_all(&y, &cfg).unwrap();
        for (new, &old) in perm.iter().enumerate() {
            prop_assert_eq!(ry[new].q, rx[old].q);
            let mut a: Vec<usize> = ry[new].selected.iter().map(|&i| perm[i]).collect();
            let mut b = rx[old].selected.clone();
            a.sort();
            b.sort();
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn sign_flips_leave_neighborhoods_unchanged(seed in 0u64..1000, mask in any::<u32>()) {
        let model = make_subspaces(&SynthConfig { m: 12, d: 3, num_subspaces: 2, ..small_model(seed) }).unwrap();
        let x = make_dataset(&model, &[10, 10], 0.05, seed).unwrap();
        let flip: Vec<bool> = (0..x.len()).map(|j| mask >> j & 1 == 1).collect();
        let y = flipped(&x, &flip);
        let cfg = TscConfig::modified(0.2);
        for j in 0..x.len() {
            let a = select_neighborhood(&x, j, &cfg).unwrap();
            let b = select_neighborhood(&y, j, &cfg).unwrap();
            prop_assert_eq!(&a.selected, &b.selected);
            prop_assert_eq!(a.q, b.q);
            for (ca, cb) in a.coefficients.iter().zip(&b.coefficients) {
                prop_assert!((ca.abs() - cb.abs()).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn residual_traces_are_monotone_and_minimal(seed in 0u64..1000, tau in 0.0f64..0.8) {
        let cfg = SynthConfig { m: 20, d: 4, num_subspaces: 3, shared_dims: 1, n_per_subspace: 12, noise_var: 0.2, seed };
        let (_, x) = generate(&cfg).unwrap();
        let tsc = TscConfig::modified(tau);
        for r in select_all(&x, &tsc).unwrap() {
            prop_assert!(r.residual_trace.windows(2).all(|w| w[1] <= w[0] + 1e-12));
            prop_assert_eq!(r.residual_trace.len(), r.q);
            prop_assert!(!r.selected.contains(&r.point_index));
            let tau_eff = tau.max(tsc.zero_tol);
            if !r.truncated {
                prop_assert!(*r.residual_trace.last().unwrap() <= tau_eff);
            }
            if r.q > 1 {
                prop_assert!(r.residual_trace[r.q - 2] > tau_eff);
            }
        }
    }
}
