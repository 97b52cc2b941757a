mod common;

use common::inclusion_probabilities;
use kbalign::rng::substream;
use kbalign::sampling::weighted_sample_without_replacement;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

#[test]
fn single_draw_frequencies_follow_weights() {
    let weights = [1.0, 2.0, 3.0, 4.0];
    let n = 100_000;
    let mut rng = substream(2024, "sampler-test", "k1");
    let mut counts = [0usize; 4];
    for _ in 0..n {
        counts[weighted_sample_without_replacement(&weights, 1, &mut rng)[0]] += 1;
    }
    let expected = [0.1, 0.2, 0.3, 0.4];
    let mut chi2 = 0.0;
    for i in 0..4 {
        let f = counts[i] as f64 / n as f64;
        assert!((f - expected[i]).abs() <= 0.01, "item {i}: {f}");
        let e = expected[i] * n as f64;
        chi2 += (counts[i] as f64 - e).powi(2) / e;
    }
    let p = 1.0 - ChiSquared::new(3.0).unwrap().cdf(chi2);
    assert!(p > 0.001, "chi-square {chi2}, p = {p}");
}

#[test]
fn pair_inclusion_matches_enumeration() {
    let mut gen = ChaCha8Rng::seed_from_u64(77);
    let mut rng = substream(5, "sampler-test", "k2");
    for size in 2..=6 {
        for _ in 0..3 {
            let weights: Vec<f64> = (0..size).map(|_| gen.random_range(0.1..5.0)).collect();
            let exact = inclusion_probabilities(&weights, 2);
            let n = 40_000;
            let mut counts = vec![0usize; size];
            for _ in 0..n {
                let s = weighted_sample_without_replacement(&weights, 2, &mut rng);
                assert_eq!(s.len(), 2);
                assert_ne!(s[0], s[1]);
                for i in s {
                    counts[i] += 1;
                }
            }
            for i in 0..size {
                let f = counts[i] as f64 / n as f64;
                assert!((f - exact[i]).abs() <= 0.01, "size {size} item {i}: {f} vs {}", exact[i]);
            }
        }
    }
}

#[test]
fn enumeration_oracle_sanity() {
    let p = inclusion_probabilities(&[1.0, 1.0, 1.0, 1.0], 2);
    for x in p {
        assert!((x - 0.5).abs() < 1e-12);
    }
    let p = inclusion_probabilities(&[1.0, 3.0], 1);
    assert!((p[0] - 0.25).abs() < 1e-12);
}

#[test]
fn zero_weights_fall_back_to_uniform() {
    let mut rng = substream(1, "sampler-test", "zero");
    let mut counts = [0usize; 3];
    for _ in 0..30_000 {
        counts[weighted_sample_without_replacement(&[0.0, 0.0, 0.0], 1, &mut rng)[0]] += 1;
    }
    for c in counts {
        assert!((c as f64 / 30_000.0 - 1.0 / 3.0).abs() < 0.015);
    }
    // Positive weights always come first.
    for _ in 0..100 {
        assert_eq!(weighted_sample_without_replacement(&[0.0, 1e-9, 0.0], 1, &mut rng), vec![1]);
    }
}
