//! Sampler frequencies checked against 5σ binomial bounds.

use dsgan_core::data::{
    nearest_mode, sample_conditional_ring, sample_ring_labeled, sample_trajectories, ConditionalRingSpec,
    RingMixtureSpec, TrajectorySpec,
};
use dsgan_core::rng;

const N: usize = 10_000;

fn within_5_sigma(count: usize, p: f64) -> bool {
    let mean = N as f64 * p;
    let sd = (N as f64 * p * (1.0 - p)).sqrt();
    (count as f64 - mean).abs() <= 5.0 * sd
}

#[test]
fn ring_modes_are_uniform() {
    let spec = RingMixtureSpec::default();
    let (_, modes) = sample_ring_labeled(&spec, N, &mut rng::seeded(1));
    for k in 0..8 {
        let c = modes.iter().filter(|&&m| m == k).count();
        assert!(within_5_sigma(c, 1.0 / 8.0), "mode {k}: {c}");
    }
}

#[test]
fn ring_samples_are_high_quality() {
    let spec = RingMixtureSpec::default();
    let (x, modes) = sample_ring_labeled(&spec, N, &mut rng::seeded(2));
    let mut good = 0;
    for (i, &mode) in modes.iter().enumerate() {
        let (k, d) = nearest_mode([x.row(i)[0], x.row(i)[1]], &spec);
        if d <= 3.0 * spec.std {
            good += 1;
            assert_eq!(k, mode);
        }
    }
    // χ² with 2 dof: P(r > 3σ) = e^{-4.5} ≈ 0.0111
    assert!(good as f64 / N as f64 >= 0.985, "{good}");
}

#[test]
fn conditional_labels_are_uniform_and_owned() {
    let spec = ConditionalRingSpec::default();
    let batch = sample_conditional_ring(&spec, N, &mut rng::seeded(3));
    for l in 0..spec.n_labels {
        let c = batch.labels.iter().filter(|&&x| x == l).count();
        assert!(within_5_sigma(c, 0.25), "label {l}: {c}");
    }
    let cond = batch.condition.as_ref().unwrap();
    for i in 0..N {
        let p = batch.target.row(i);
        let (k, _) = nearest_mode([p[0], p[1]], &spec.base);
        assert!(spec.owned_modes(batch.labels[i]).contains(&k));
        assert_eq!(cond.row(i)[batch.labels[i]], 1.0);
    }
}

#[test]
fn trajectory_directions_are_balanced() {
    let spec = TrajectorySpec::default();
    let batch = sample_trajectories(&spec, N, &mut rng::seeded(4));
    let ccw = batch.labels.iter().filter(|&&l| l == 0).count();
    assert!(within_5_sigma(ccw, 0.5), "{ccw}");
    assert_eq!(batch.target.cols(), 2 * spec.horizon);
    assert_eq!(batch.condition.unwrap().cols(), 2 * spec.context_len);
}
