//! Seeded synthetic benchmark with a label-similarity tree.
//!
//! Label prototypes are leaves of a tree: each child is its parent's
//! direction plus an independent random unit offset, renormalized, so
//! siblings are closer to each other than to cousins. Knowledge-base
//! vectors are noisy copies of their prototype, where part of the noise
//! lives in a shared low-rank nuisance subspace as it does in real
//! sentence-embedding spaces; target-language vectors
//! ("translations", evaluation queries, unlabeled queries) are independent
//! noisy copies, optionally passed through a fixed linear distortion
//! standing in for a systematic language shift.

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::embed::{normalize, EmbeddingTable};
use crate::error::{Error, Result};
use crate::jsonl;
use crate::kb::{save_kb, KnowledgeBase, LabeledQuery, UnlabeledQuery, UnlabeledQuerySet};
use crate::rng::{substream, StreamRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchmarkSpec {
    pub n_labels: usize,
    pub queries_per_label: usize,
    pub dim: usize,
    /// Per-coordinate standard deviation of the Gaussian noise added to a prototype.
    pub sigma: f64,
    pub tree_depth: usize,
    /// Length of the random offset added at each tree level.
    pub branch_spread: f64,
    /// Rank of the shared nuisance subspace that carries part of the noise.
    pub nuisance_rank: usize,
    /// Fraction of noise variance placed in the nuisance subspace (0 = isotropic).
    pub nuisance_share: f64,
    /// Blend toward a random rotation for target-language vectors (0 = none).
    pub language_shift: f64,
    pub eval_queries_per_label: usize,
    pub unlabeled_queries: usize,
    pub seed: u64,
}

impl Default for BenchmarkSpec {
    fn default() -> Self {
        BenchmarkSpec {
            n_labels: 20,
            queries_per_label: 50,
            dim: 32,
            sigma: 0.6,
            tree_depth: 2,
            branch_spread: 1.0,
            nuisance_rank: 8,
            nuisance_share: 0.8,
            language_shift: 0.0,
            eval_queries_per_label: 10,
            unlabeled_queries: 100,
            seed: 7,
        }
    }
}

impl BenchmarkSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_labels == 0 || self.queries_per_label == 0 || self.dim == 0 || self.tree_depth == 0 {
            return Err(Error::invalid("benchmark sizes and depth must be positive"));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::invalid("sigma must be non-negative"));
        }
        if !(0.0..=1.0).contains(&self.nuisance_share) {
            return Err(Error::invalid("nuisance share must be in [0, 1]"));
        }
        if self.nuisance_share > 0.0 && !(1..=self.dim).contains(&self.nuisance_rank) {
            return Err(Error::invalid("nuisance rank must be in [1, dim]"));
        }
        if !(0.0..=1.0).contains(&self.language_shift) {
            return Err(Error::invalid("language shift must be in [0, 1]"));
        }
        if !(self.branch_spread >= 0.0 && self.branch_spread.is_finite()) {
            return Err(Error::invalid("branch spread must be non-negative"));
        }
        Ok(())
    }

    /// Children per tree node.
    pub fn branching(&self) -> usize {
        let b = (self.n_labels as f64).powf(1.0 / self.tree_depth as f64).ceil() as usize;
        let mut b = b.max(1);
        // Guard against float rounding leaving too few leaves.
        while b.pow(self.tree_depth as u32) < self.n_labels {
            b += 1;
        }
        b
    }
}

const LEVEL_WORDS: [&[&str]; 3] = [
    &["billing", "delivery", "account", "product", "payment", "returns", "security", "loyalty", "support", "booking"],
    &[
        "refund", "cancel", "status", "change", "invoice", "damaged", "missing", "upgrade", "reset", "verify",
        "schedule", "address", "warranty", "coupon", "limit", "dispute", "transfer", "feedback", "login", "renew",
    ],
    &["urgent", "partial", "bulk", "repeat", "overseas", "gift", "trial", "family", "business", "student"],
];

fn node_word(level: usize, index: usize) -> String {
    let words = LEVEL_WORDS[level.min(LEVEL_WORDS.len() - 1)];
    if index < words.len() && level < LEVEL_WORDS.len() {
        words[index].to_string()
    } else {
        format!("{}{}", words[index % words.len()], index / words.len() + level)
    }
}

#[derive(Debug, Clone)]
pub struct BenchmarkData {
    pub spec: BenchmarkSpec,
    pub kb: KnowledgeBase,
    /// Source-language vectors keyed by knowledge-base id.
    pub kb_embeddings: EmbeddingTable,
    /// Target-language vectors: one per knowledge-base id (its translation),
    /// plus every evaluation and unlabeled query id.
    pub query_embeddings: EmbeddingTable,
    /// Held-out target-language queries; `label` is the truth label.
    pub eval_queries: Vec<LabeledQuery>,
    pub unlabeled: UnlabeledQuerySet,
    pub labels: Vec<String>,
    pub prototypes: Vec<Vec<f64>>,
    /// Index of each label's parent node, for sibling checks.
    pub parents: Vec<usize>,
}

fn gaussian(rng: &mut StreamRng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| StandardNormal.sample(rng)).collect()
}

fn random_unit(rng: &mut StreamRng, dim: usize) -> Vec<f64> {
    loop {
        if let Some(v) = normalize(gaussian(rng, dim)) {
            return v;
        }
    }
}

/// Gram-Schmidt on a Gaussian matrix: a uniformly random orthogonal matrix.
fn random_orthogonal(rng: &mut StreamRng, dim: usize) -> Vec<Vec<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(dim);
    while rows.len() < dim {
        let mut v = gaussian(rng, dim);
        for r in &rows {
            let p: f64 = v.iter().zip(r).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(r).for_each(|(a, b)| *a -= p * b);
        }
        if let Some(v) = normalize(v) {
            if v.iter().all(|x| x.is_finite()) {
                rows.push(v);
            }
        }
    }
    rows
}

/// Gaussian noise whose per-coordinate variance averages `sigma²`, with a
/// `share` of it concentrated in a fixed low-rank subspace.
struct Noise {
    sigma: f64,
    iso: f64,
    nuisance: f64,
    basis: Vec<Vec<f64>>,
}

impl Noise {
    fn new(spec: &BenchmarkSpec) -> Noise {
        let basis = if spec.nuisance_share > 0.0 {
            let mut rows = random_orthogonal(&mut substream(spec.seed, "bench", "nuisance"), spec.dim);
            rows.truncate(spec.nuisance_rank);
            rows
        } else {
            Vec::new()
        };
        let nuisance = if basis.is_empty() {
            0.0
        } else {
            (spec.nuisance_share * spec.dim as f64 / basis.len() as f64).sqrt()
        };
        Noise {
            sigma: spec.sigma,
            iso: (1.0 - spec.nuisance_share).sqrt(),
            nuisance,
            basis,
        }
    }

    fn apply(&self, rng: &mut StreamRng, center: &[f64]) -> Vec<f64> {
        let mut v: Vec<f64> = center.iter().map(|c| c + self.sigma * self.iso * gauss(rng)).collect();
        for b in &self.basis {
            let g = self.sigma * self.nuisance * gauss(rng);
            v.iter_mut().zip(b).for_each(|(x, y)| *x += g * y);
        }
        normalize(v).unwrap_or_else(|| center.to_vec())
    }
}

fn gauss(rng: &mut StreamRng) -> f64 {
    StandardNormal.sample(rng)
}

fn to_f32(v: &[f64]) -> Vec<f32> {
    v.iter().map(|&x| x as f32).collect()
}

pub fn gen_benchmark(spec: &BenchmarkSpec) -> Result<BenchmarkData> {
    spec.validate()?;
    let dim = spec.dim;
    let b = spec.branching();

    // Breadth-first tree expansion; keep (vector, name, parent index).
    let mut tree_rng = substream(spec.seed, "bench", "tree");
    let mut level: Vec<(Vec<f64>, Vec<String>, usize)> = vec![(vec![0.0; dim], Vec::new(), 0)];
    for depth in 0..spec.tree_depth {
        let mut next = Vec::with_capacity(level.len() * b);
        for (parent_idx, (vec, names, _)) in level.iter().enumerate() {
            for _ in 0..b {
                let offset = random_unit(&mut tree_rng, dim);
                let child = if depth == 0 {
                    offset
                } else {
                    let raw: Vec<f64> = vec.iter().zip(&offset).map(|(p, o)| p + spec.branch_spread * o).collect();
                    normalize(raw).unwrap_or(offset)
                };
                let mut child_names = names.clone();
                child_names.push(node_word(depth, next.len()));
                next.push((child, child_names, parent_idx));
            }
        }
        level = next;
    }
    level.truncate(spec.n_labels);
    let labels: Vec<String> = level.iter().map(|(_, n, _)| n.join("_")).collect();
    let prototypes: Vec<Vec<f64>> = level.iter().map(|(v, _, _)| v.clone()).collect();
    let parents: Vec<usize> = level.iter().map(|(_, _, p)| *p).collect();

    let shift = if spec.language_shift > 0.0 {
        let q = random_orthogonal(&mut substream(spec.seed, "bench", "shift"), dim);
        Some((q, spec.language_shift))
    } else {
        None
    };
    let target_center = |p: &[f64]| -> Vec<f64> {
        match &shift {
            None => p.to_vec(),
            Some((q, a)) => {
                let raw: Vec<f64> = (0..dim)
                    .map(|r| (1.0 - a) * p[r] + a * q[r].iter().zip(p).map(|(x, y)| x * y).sum::<f64>())
                    .collect();
                normalize(raw).unwrap_or_else(|| p.to_vec())
            }
        }
    };

    let noise = Noise::new(spec);
    let mut kb_rng = substream(spec.seed, "bench", "kb");
    let mut tr_rng = substream(spec.seed, "bench", "translate");
    let mut entries = Vec::with_capacity(spec.n_labels * spec.queries_per_label);
    let mut kb_table = EmbeddingTable::new(dim);
    let mut q_table = EmbeddingTable::new(dim);
    for (l, label) in labels.iter().enumerate() {
        let topic = label.replace('_', " ");
        let tc = target_center(&prototypes[l]);
        for i in 0..spec.queries_per_label {
            let id = format!("kb-{l:03}-{i:03}");
            entries.push(LabeledQuery::new(&id, format!("question {i} about {topic}"), label));
            kb_table.push(&id, &to_f32(&noise.apply(&mut kb_rng, &prototypes[l])))?;
            q_table.push(&id, &to_f32(&noise.apply(&mut tr_rng, &tc)))?;
        }
    }

    let mut ev_rng = substream(spec.seed, "bench", "eval");
    let mut eval_queries = Vec::new();
    for (l, label) in labels.iter().enumerate() {
        let tc = target_center(&prototypes[l]);
        for i in 0..spec.eval_queries_per_label {
            let id = format!("ev-{l:03}-{i:03}");
            eval_queries.push(LabeledQuery::new(&id, format!("[T] eval {i} about {}", label.replace('_', " ")), label));
            q_table.push(&id, &to_f32(&noise.apply(&mut ev_rng, &tc)))?;
        }
    }

    let mut un_rng = substream(spec.seed, "bench", "unlabeled");
    let mut unlabeled = Vec::new();
    for i in 0..spec.unlabeled_queries {
        let l = un_rng.random_range(0..labels.len());
        let id = format!("un-{i:05}");
        let tc = target_center(&prototypes[l]);
        q_table.push(&id, &to_f32(&noise.apply(&mut un_rng, &tc)))?;
        unlabeled.push(UnlabeledQuery {
            id,
            text: format!("[T] unlabeled {i} about {}", labels[l].replace('_', " ")),
        });
    }

    Ok(BenchmarkData {
        spec: spec.clone(),
        kb: KnowledgeBase::new(entries, "en")?,
        kb_embeddings: kb_table,
        query_embeddings: q_table,
        eval_queries,
        unlabeled: UnlabeledQuerySet::new(unlabeled, "xx")?,
        labels,
        prototypes,
        parents,
    })
}

pub const BENCH_FILES: [&str; 6] = [
    "kb.jsonl",
    "kb_emb.jsonl",
    "query_emb.jsonl",
    "eval.jsonl",
    "unlabeled.jsonl",
    "bench.json",
];

impl BenchmarkData {
    /// Writes every artifact listed in [`BENCH_FILES`] into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        save_kb(&self.kb, &dir.join("kb.jsonl"))?;
        self.kb_embeddings.save(&dir.join("kb_emb.jsonl"))?;
        self.query_embeddings.save(&dir.join("query_emb.jsonl"))?;
        jsonl::write(&dir.join("eval.jsonl"), &self.eval_queries)?;
        jsonl::write(&dir.join("unlabeled.jsonl"), self.unlabeled.queries())?;
        let path = dir.join("bench.json");
        std::fs::write(&path, serde_json::to_string_pretty(&self.spec)?).map_err(|e| Error::io(&path, e))
    }
}
