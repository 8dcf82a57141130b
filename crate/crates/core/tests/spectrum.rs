mod common;

use common::jacobi_singular_values;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sparse_diarize::spectrum::{estimate_max_speakers, kneedle_knee, singular_values_of};
use sparse_diarize::{simulate, SimScenario};

#[test]
fn singular_values_match_jacobi() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..30 {
        let m = rng.random_range(1..20);
        let t = rng.random_range(1..40);
        let x = DMatrix::<f64>::from_fn(m, t, |_, _| rng.sample(StandardNormal));
        let ours = singular_values_of(&x);
        let oracle = jacobi_singular_values(&x);
        assert_eq!(ours.len(), m.min(t));
        let top = oracle[0];
        for (a, b) in ours.iter().zip(&oracle) {
            assert!((a - b).abs() <= 1e-9 * top, "{a} vs {b}");
        }
    }
}

#[test]
fn rank_deficient_spectrum_has_exact_zeros() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let left = DMatrix::<f64>::from_fn(30, 3, |_, _| rng.sample(StandardNormal));
    let right = DMatrix::<f64>::from_fn(3, 80, |_, _| rng.sample(StandardNormal));
    let values = singular_values_of(&(left * right));
    let top = values[0];
    assert_eq!(values.iter().filter(|&&v| v > 1e-8 * top).count(), 3);
}

#[test]
fn noiseless_four_speakers() {
    let sim = simulate(&SimScenario {
        num_speakers: 4,
        embedding_dim: 64,
        num_steps: 600,
        seed: 1,
        ..SimScenario::default()
    })
    .unwrap();
    let report = estimate_max_speakers(&sim.signal, 1.0).unwrap();
    let top = report.singular_values[0];
    assert_eq!(report.singular_values.iter().filter(|&&v| v > 1e-8 * top).count(), 4);
    assert_eq!(report.knee_index, 4);
    assert_eq!(report.k_max, 10);
}

#[test]
fn noisy_knee_stays_near_four() {
    let mut hits = 0;
    for seed in 0..20 {
        let sim = simulate(&SimScenario {
            num_speakers: 4,
            embedding_dim: 64,
            num_steps: 600,
            noise_sigma: 0.05,
            seed,
            ..SimScenario::default()
        })
        .unwrap();
        let report = estimate_max_speakers(&sim.signal, 1.0).unwrap();
        if (3..=5).contains(&report.knee_index) {
            hits += 1;
        }
        assert!((2..=13).contains(&report.k_max));
    }
    assert!(hits >= 18, "knee in 3..=5 for {hits}/20 seeds");
}

#[test]
fn knee_of_step_spectrum() {
    let mut v = vec![10.0; 4];
    v.extend(std::iter::repeat_n(0.01, 16));
    assert_eq!(kneedle_knee(&v, 1.0).unwrap(), 4);
}
