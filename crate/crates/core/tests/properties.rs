use dsgan_core::metrics::{frechet_2d, pairwise_diversity};
use dsgan_core::nd::{Tape, Tensor};
use dsgan_core::objectives::{diversity_ratio, latent_gaps, output_diversity_var, DiversityConfig, Norm};
use proptest::prelude::*;

fn vec_of(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0f64..5.0, len)
}

fn row(v: &[f64]) -> Tensor {
    Tensor::vector(v.to_vec())
}

fn norm_strategy() -> impl Strategy<Value = Norm> {
    prop_oneof![Just(Norm::L1), Just(Norm::L2)]
}

fn cfg(norm: Norm, tau: Option<f64>) -> DiversityConfig {
    DiversityConfig {
        norm,
        tau,
        ..DiversityConfig::default()
    }
}

fn points(data: Vec<f64>) -> Tensor {
    let n = data.len() / 2;
    Tensor::matrix(n, 2, data).unwrap()
}

proptest! {
    #[test]
    fn ratio_is_symmetric(y1 in vec_of(3), y2 in vec_of(3), z1 in vec_of(2), z2 in vec_of(2), norm in norm_strategy()) {
        let c = cfg(norm, Some(10.0));
        let a = diversity_ratio(&row(&y1), &row(&y2), &row(&z1), &row(&z2), &c);
        let b = diversity_ratio(&row(&y2), &row(&y1), &row(&z2), &row(&z1), &c);
        match (a, b) {
            (Ok(a), Ok(b)) => prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0)),
            (a, b) => prop_assert_eq!(a.is_err(), b.is_err()),
        }
    }

    #[test]
    fn ratio_is_translation_invariant(y1 in vec_of(2), y2 in vec_of(2), shift in vec_of(2), z1 in vec_of(3), z2 in vec_of(3), norm in norm_strategy()) {
        let c = cfg(norm, None);
        prop_assume!(norm.of_diff(&z1, &z2) > 1e-3);
        let s1: Vec<f64> = y1.iter().zip(&shift).map(|(a, b)| a + b).collect();
        let s2: Vec<f64> = y2.iter().zip(&shift).map(|(a, b)| a + b).collect();
        let a = diversity_ratio(&row(&y1), &row(&y2), &row(&z1), &row(&z2), &c).unwrap();
        let b = diversity_ratio(&row(&s1), &row(&s2), &row(&z1), &row(&z2), &c).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0));
    }

    #[test]
    fn ratio_stays_within_margin(y1 in vec_of(2), y2 in vec_of(2), z1 in vec_of(2), z2 in vec_of(2), tau in 0.01f64..20.0, norm in norm_strategy()) {
        prop_assume!(norm.of_diff(&z1, &z2) > 1e-8);
        let r = diversity_ratio(&row(&y1), &row(&y2), &row(&z1), &row(&z2), &cfg(norm, Some(tau))).unwrap();
        prop_assert!((0.0..=tau).contains(&r));
    }

    #[test]
    fn ratio_is_homogeneous(y1 in vec_of(2), y2 in vec_of(2), z1 in vec_of(2), z2 in vec_of(2), alpha in 0.1f64..10.0, norm in norm_strategy()) {
        prop_assume!(norm.of_diff(&z1, &z2) > 1e-3);
        let c = cfg(norm, None);
        let base = diversity_ratio(&row(&y1), &row(&y2), &row(&z1), &row(&z2), &c).unwrap();
        let ys = |v: &[f64]| row(&v.iter().map(|x| alpha * x).collect::<Vec<_>>());
        let scaled_y = diversity_ratio(&ys(&y1), &ys(&y2), &row(&z1), &row(&z2), &c).unwrap();
        let scaled_z = diversity_ratio(&row(&y1), &row(&y2), &ys(&z1), &ys(&z2), &c).unwrap();
        prop_assert!((scaled_y - alpha * base).abs() <= 1e-9 * scaled_y.max(1.0));
        prop_assert!((scaled_z - base / alpha).abs() <= 1e-9 * base.max(1.0));
    }

    #[test]
    fn batch_regularizer_within_margin(y in vec_of(12), z in vec_of(12), tau in 0.05f64..5.0) {
        let tape = Tape::new();
        let y1 = Tensor::matrix(3, 2, y[..6].to_vec()).unwrap();
        let y2 = Tensor::matrix(3, 2, y[6..].to_vec()).unwrap();
        let z1 = Tensor::matrix(3, 2, z[..6].to_vec()).unwrap();
        let z2 = Tensor::matrix(3, 2, z[6..].to_vec()).unwrap();
        let c = cfg(Norm::L1, Some(tau));
        if let Ok(gaps) = latent_gaps(&z1, &z2, Norm::L1, c.min_z_gap) {
            let term = output_diversity_var(tape.constant(y1), tape.constant(y2), &gaps, &c).unwrap();
            prop_assert!((0.0..=tau).contains(&term.value.item()));
        }
    }

    #[test]
    fn diversity_scales_quadratically(data in vec_of(20), alpha in -4.0f64..4.0, shift in -10.0f64..10.0) {
        let x = points(data.clone());
        let base = pairwise_diversity(&x).unwrap();
        let scaled = pairwise_diversity(&x.map(|v| alpha * v + shift)).unwrap();
        prop_assert!((scaled - alpha * alpha * base).abs() <= 1e-8 * scaled.max(1.0));
    }

    #[test]
    fn frechet_symmetric_and_nonnegative(a in vec_of(16), b in vec_of(16)) {
        let (a, b) = (points(a), points(b));
        let ab = frechet_2d(&a, &b).unwrap();
        let ba = frechet_2d(&b, &a).unwrap();
        prop_assert!((ab - ba).abs() <= 1e-9 * ab.max(1.0));
        prop_assert!(ab >= -1e-9);
    }

    #[test]
    fn metrics_are_permutation_invariant(data in vec_of(20), other in vec_of(20), rot in 1usize..9) {
        let x = points(data.clone());
        let mut rows: Vec<Vec<f64>> = (0..10).map(|i| x.row(i).to_vec()).collect();
        rows.rotate_left(rot);
        rows.swap(0, 9);
        let p = Tensor::from_rows(&rows).unwrap();
        let y = points(other);
        prop_assert!((pairwise_diversity(&x).unwrap() - pairwise_diversity(&p).unwrap()).abs() < 1e-9);
        prop_assert!((frechet_2d(&x, &y).unwrap() - frechet_2d(&p, &y).unwrap()).abs() < 1e-9);
    }
}
