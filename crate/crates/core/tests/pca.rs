mod common;

use agm_core::pca::{fit_pca, max_orthonormality_error, sample_k};
use agm_core::{seed, Matrix};
use common::*;
use proptest::prelude::*;

#[test]
fn eigendecomposition_agrees_with_cubic_roots() {
    let mut checked = 0;
    for s in 0..500 {
        if let Some(err) = pca_eigen_disagreement(s) {
            assert!(err < 1e-6, "seed {s}: {err}");
            checked += 1;
        }
    }
    assert!(checked > 450);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn components_are_orthonormal(seed_value in any::<u64>(), n in 2usize..40, d in 1usize..12) {
        let x = random_matrix(n, d, &mut seed::rng(seed_value));
        let k = sample_k(d, &mut seed::rng(seed_value ^ 1));
        let t = fit_pca(&x, k).unwrap();
        prop_assert!(max_orthonormality_error(t.components()) <= 1e-8);
        prop_assert!(t.eigenvalues().windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn full_rank_rotation_preserves_total_variance_and_inverts(seed_value in any::<u64>(), n in 3usize..30, d in 1usize..8) {
        let x = random_matrix(n, d, &mut seed::rng(seed_value));
        let t = fit_pca(&x, d).unwrap();
        let z = t.transform(&x).unwrap();
        let var = |m: &Matrix| -> f64 {
            (0..m.cols()).map(|j| {
                let col = m.column(j);
                let mean = col.iter().sum::<f64>() / n as f64;
                col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
            }).sum()
        };
        prop_assert!((var(&x) - var(&z)).abs() <= 1e-9 * var(&x).max(1.0));
        prop_assert!((t.eigenvalues().iter().sum::<f64>() - var(&x)).abs() <= 1e-9 * var(&x).max(1.0));
        let back = t.inverse_transform(&z).unwrap();
        for (a, b) in back.as_slice().iter().zip(x.as_slice()) {
            prop_assert!((a - b).abs() <= 1e-8);
        }
    }
}

#[test]
fn first_component_beats_random_directions() {
    let mut rng = seed::rng(5);
    let mut x = random_matrix(60, 4, &mut rng);
    for r in 0..60 {
        let v = x.get(r, 0);
        x.set(r, 1, x.get(r, 1) + 2.0 * v);
    }
    let t = fit_pca(&x, 1).unwrap();
    let projected_var = |u: &[f64]| -> f64 {
        let p: Vec<f64> = x.iter_rows().map(|r| r.iter().zip(u).map(|(a, b)| a * b).sum()).collect();
        let mean = p.iter().sum::<f64>() / p.len() as f64;
        p.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (p.len() - 1) as f64
    };
    let best = projected_var(t.components().row(0));
    assert!((best - t.eigenvalues()[0]).abs() < 1e-9);
    for _ in 0..1000 {
        let mut u: Vec<f64> = (0..4).map(|_| gaussian(&mut rng)).collect();
        let n = u.iter().map(|v| v * v).sum::<f64>().sqrt();
        u.iter_mut().for_each(|v| *v /= n);
        assert!(projected_var(&u) <= best + 1e-12);
    }
}

#[test]
fn sample_k_is_uniform_over_the_upper_half() {
    let draws = 10_000;
    for d in [1, 2, 7, 10, 33] {
        let counts = sample_k_counts(d, draws, d as u64);
        let lo = d.div_ceil(2);
        assert!(counts[..lo].iter().all(|&c| c == 0), "d={d}: below ceil(d/2)");
        let m = (d - lo + 1) as f64;
        let p = 1.0 / m;
        let expected = draws as f64 * p;
        let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
        for (k, &c) in counts.iter().enumerate().skip(lo) {
            assert!((c as f64 - expected).abs() <= 5.0 * sigma.max(1e-9), "d={d} k={k}: {c}");
        }
    }
}

#[test]
fn constant_input_has_zero_spectrum() {
    let x = Matrix::from_rows(&[[2.0, -1.0], [2.0, -1.0], [2.0, -1.0]]).unwrap();
    let t = fit_pca(&x, 2).unwrap();
    assert!(t.eigenvalues().iter().all(|v| v.abs() < 1e-10));
    assert!(t.transform(&x).unwrap().as_slice().iter().all(|&v| v == 0.0));
    assert_eq!(t.transform(&Matrix::zeros(0, 2)).unwrap().rows(), 0);
}
