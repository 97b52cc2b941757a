//! Weighted sampling without replacement via exponential keys.
//!
//! Each item with weight `w > 0` draws `u ~ U(0, 1]` and gets the key
//! `ln(u) / w` (the log of `u^(1/w)`); the `k` largest keys win. This is
//! equivalent to drawing items one at a time with probability proportional
//! to weight among those not yet drawn. Zero-weight items rank after every
//! positive-weight item in uniformly random order, so an all-zero pool
//! degrades to uniform sampling.

use rand::Rng;

use crate::rng::open_unit;

/// Returns the positions of the sampled items in draw order. If fewer than
/// `k` items exist, all of them are returned.
pub fn weighted_sample_without_replacement<R: Rng + ?Sized>(
    weights: &[f64],
    k: usize,
    rng: &mut R,
) -> Vec<usize> {
    let mut keyed: Vec<(bool, f64, usize)> = weights
        .iter()
        .enumerate()
        .map(|(i, &w)| {
            let u = open_unit(rng);
            if w > 0.0 && w.is_finite() {
                (true, u.ln() / w, i)
            } else {
                (false, u, i)
            }
        })
        .collect();
    keyed.sort_by(|a, b| {
        b.0.cmp(&a.0)
            .then_with(|| b.1.total_cmp(&a.1))
            .then_with(|| a.2.cmp(&b.2))
    });
    keyed.into_iter().take(k).map(|(_, _, i)| i).collect()
}

/// Uniform pick of one position from `0..n`.
pub fn uniform_index<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Option<usize> {
    (n > 0).then(|| rng.random_range(0..n))
}
