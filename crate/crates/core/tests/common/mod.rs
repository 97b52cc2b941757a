//! Independent reference implementations used by the integration tests.
//! Nothing here calls into the library's ranking, metric, loss or sampling
//! code.

#![allow(dead_code)]

use kbalign::adapter::{AdapterModel, PairGroup};
use rand::Rng;

pub fn unit(v: &[f64]) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / n).collect()
}

pub fn random_unit<R: Rng>(rng: &mut R, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        if v.iter().map(|x| x * x).sum::<f64>() > 1e-6 {
            return unit(&v);
        }
    }
}

/// Full sort of every index entry: score descending, id ascending.
pub fn brute_force_ranking(index: &[(String, String, Vec<f64>)], query: &[f64]) -> Vec<(String, String, f64)> {
    let mut all: Vec<(String, String, f64)> = index
        .iter()
        .map(|(id, label, v)| (id.clone(), label.clone(), v.iter().zip(query).map(|(a, b)| a * b).sum()))
        .collect();
    all.sort_by(|a, b| b.2.partial_cmp(&a.2).unwrap().then(a.0.cmp(&b.0)));
    all
}

/// Recall@k for each k and MRR truncated at `depth`, straight from the full ranking.
pub fn brute_force_metrics(
    index: &[(String, String, Vec<f64>)],
    queries: &[(Vec<f64>, String)],
    ks: &[usize],
    depth: usize,
) -> (Vec<f64>, f64) {
    let mut hits = vec![0usize; ks.len()];
    let mut rr = 0.0;
    for (q, truth) in queries {
        let ranking = brute_force_ranking(index, q);
        let mut first = None;
        for (pos, (_, label, _)) in ranking.iter().enumerate() {
            if label == truth {
                first = Some(pos + 1);
                break;
            }
        }
        for (slot, &k) in ks.iter().enumerate() {
            if let Some(r) = first {
                if r <= k {
                    hits[slot] += 1;
                }
            }
        }
        if let Some(r) = first {
            if r <= depth {
                rr += 1.0 / r as f64;
            }
        }
    }
    let n = queries.len() as f64;
    (hits.iter().map(|&h| h as f64 / n).collect(), rr / n)
}

/// Group loss written directly from the definition, for finite differences.
pub fn reference_loss(w: &[f64], d_in: usize, d_out: usize, tau: f64, g: &PairGroup) -> f64 {
    let proj = |x: &[f64]| -> Vec<f64> {
        let z: Vec<f64> = (0..d_out)
            .map(|r| (0..d_in).map(|c| w[r * d_in + c] * x[c]).sum())
            .collect();
        unit(&z)
    };
    let a = proj(&g.anchor);
    let sim = |x: &[f64]| -> f64 { a.iter().zip(proj(x)).map(|(p, q)| p * q).sum::<f64>() / tau };
    let pos = sim(&g.positive);
    let mut logits = vec![pos];
    logits.extend(g.negatives.iter().map(|n| sim(n)));
    let mx = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = mx + logits.iter().map(|l| (l - mx).exp()).sum::<f64>().ln();
    lse - pos
}

pub fn reference_batch_loss(w: &[f64], a: &AdapterModel, groups: &[PairGroup]) -> f64 {
    groups
        .iter()
        .map(|g| reference_loss(w, a.d_in, a.d_out, a.temperature, g))
        .sum::<f64>()
        / groups.len() as f64
}

/// Central differences with step `h` for every weight.
pub fn finite_difference_gradient(a: &AdapterModel, groups: &[PairGroup], h: f64) -> Vec<f64> {
    let mut w = a.weights.clone();
    (0..w.len())
        .map(|i| {
            let orig = w[i];
            w[i] = orig + h;
            let up = reference_batch_loss(&w, a, groups);
            w[i] = orig - h;
            let down = reference_batch_loss(&w, a, groups);
            w[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Exact inclusion probability of every item in a k-draw weighted sample
/// without replacement, by enumerating all ordered draw sequences.
pub fn inclusion_probabilities(weights: &[f64], k: usize) -> Vec<f64> {
    fn walk(weights: &[f64], taken: &mut Vec<usize>, p: f64, k: usize, out: &mut [f64]) {
        if taken.len() == k {
            for &i in taken.iter() {
                out[i] += p;
            }
            return;
        }
        let remaining: f64 = (0..weights.len()).filter(|i| !taken.contains(i)).map(|i| weights[i]).sum();
        for i in 0..weights.len() {
            if taken.contains(&i) {
                continue;
            }
            taken.push(i);
            walk(weights, taken, p * weights[i] / remaining, k, out);
            taken.pop();
        }
    }
    let mut out = vec![0.0; weights.len()];
    walk(weights, &mut Vec::new(), 1.0, k.min(weights.len()), &mut out);
    out
}
