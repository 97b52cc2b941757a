//! Exact cosine top-k retrieval and Recall@k / MRR evaluation.

use std::collections::{BTreeMap, HashSet};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::adapter::AdapterModel;
use crate::embed::{dot, normalize, EmbeddingVector};
use crate::error::{Error, Result};
use crate::kb::LabeledQuery;

pub const DEFAULT_KS: [usize; 4] = [1, 3, 5, 10];

/// Brute-force index over unit vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalIndex {
    ids: Vec<String>,
    labels: Vec<String>,
    vectors: Vec<f64>,
    dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Hit {
    pub id: String,
    pub label: String,
    pub score: f64,
}

/// Hits in descending score order, ties by ascending id.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct RankedResult {
    pub hits: Vec<Hit>,
}

/// Builds an index over `entries`, projecting each vector through the
/// adapter (and re-normalizing) when one is given.
pub fn build_index(
    entries: &[(LabeledQuery, EmbeddingVector)],
    adapter: Option<&AdapterModel>,
) -> Result<RetrievalIndex> {
    if entries.is_empty() {
        return Err(Error::Empty("retrieval index"));
    }
    let in_dim = entries[0].1.dim();
    let dim = adapter.map_or(in_dim, |a| a.d_out);
    let mut seen = HashSet::with_capacity(entries.len());
    let mut index = RetrievalIndex {
        ids: Vec::with_capacity(entries.len()),
        labels: Vec::with_capacity(entries.len()),
        vectors: Vec::with_capacity(entries.len() * dim),
        dim,
    };
    for (q, v) in entries {
        if v.dim() != in_dim {
            return Err(Error::Dimension {
                expected: in_dim,
                actual: v.dim(),
            });
        }
        if !seen.insert(q.id.as_str()) {
            return Err(Error::DuplicateId(q.id.clone()));
        }
        let vec = match adapter {
            Some(a) => a.project(&v.values)?,
            None => v.values.clone(),
        };
        index.ids.push(q.id.clone());
        index.labels.push(q.label.clone());
        index.vectors.extend(vec);
    }
    Ok(index)
}

impl RetrievalIndex {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vector(&self, i: usize) -> &[f64] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    pub fn id(&self, i: usize) -> &str {
        &self.ids[i]
    }

    pub fn label(&self, i: usize) -> &str {
        &self.labels[i]
    }

    /// Exact top-k by cosine. `query` must already be unit-norm and in the
    /// index's space.
    pub fn query_topk(&self, query: &[f64], k: usize) -> Result<RankedResult> {
        if query.len() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                actual: query.len(),
            });
        }
        if k == 0 {
            return Err(Error::invalid("k must be at least 1"));
        }
        let mut hits: Vec<(f64, usize)> = (0..self.len()).map(|i| (dot(self.vector(i), query), i)).collect();
        // partial_cmp so that -0.0 and 0.0 tie; scores are finite.
        let cmp = |a: &(f64, usize), b: &(f64, usize)| {
            b.0.partial_cmp(&a.0)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| self.ids[a.1].cmp(&self.ids[b.1]))
        };
        if k < hits.len() {
            hits.select_nth_unstable_by(k - 1, cmp);
            hits.truncate(k);
        }
        hits.sort_by(cmp);
        Ok(RankedResult {
            hits: hits
                .into_iter()
                .map(|(score, i)| Hit {
                    id: self.ids[i].clone(),
                    label: self.labels[i].clone(),
                    score,
                })
                .collect(),
        })
    }

    /// Projects `query` through `adapter` (if any) and retrieves.
    pub fn search(&self, query: &[f64], k: usize, adapter: Option<&AdapterModel>) -> Result<RankedResult> {
        match adapter {
            Some(a) => self.query_topk(&a.project(query)?, k),
            None => {
                let q = normalize(query.to_vec()).ok_or_else(|| Error::ZeroVector("query".into()))?;
                self.query_topk(&q, k)
            }
        }
    }
}

/// What counts as a correct retrieval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Relevance {
    /// The hit's label equals the query's truth label.
    #[default]
    Label,
    /// The hit's id equals the query's truth id.
    Id,
}

/// 1-based rank of the first relevant hit.
pub fn first_match_rank(result: &RankedResult, truth: &str, relevance: Relevance) -> Option<usize> {
    result
        .hits
        .iter()
        .position(|h| match relevance {
            Relevance::Label => h.label == truth,
            Relevance::Id => h.id == truth,
        })
        .map(|p| p + 1)
}

pub fn recall_from_ranks(ranks: &[Option<usize>], k: usize) -> f64 {
    if ranks.is_empty() {
        return 0.0;
    }
    ranks.iter().filter(|r| matches!(r, Some(r) if *r <= k)).count() as f64 / ranks.len() as f64
}

pub fn mrr_from_ranks(ranks: &[Option<usize>], depth: usize) -> f64 {
    if ranks.is_empty() {
        return 0.0;
    }
    ranks
        .iter()
        .map(|r| match r {
            Some(r) if *r <= depth => 1.0 / *r as f64,
            _ => 0.0,
        })
        .sum::<f64>()
        / ranks.len() as f64
}

fn ranks_of(results: &[RankedResult], truth: &[String]) -> Result<Vec<Option<usize>>> {
    if results.len() != truth.len() {
        return Err(Error::invalid(format!(
            "{} results but {} truth labels",
            results.len(),
            truth.len()
        )));
    }
    Ok(results
        .iter()
        .zip(truth)
        .map(|(r, t)| first_match_rank(r, t, Relevance::Label))
        .collect())
}

/// Fraction of queries whose truth label appears in the top `k` hits.
pub fn recall_at_k(results: &[RankedResult], truth: &[String], k: usize) -> Result<f64> {
    Ok(recall_from_ranks(&ranks_of(results, truth)?, k))
}

/// Mean reciprocal rank of the first truth-label hit within `depth`.
pub fn mrr(results: &[RankedResult], truth: &[String], depth: usize) -> Result<f64> {
    if depth == 0 {
        return Err(Error::invalid("MRR depth must be at least 1"));
    }
    Ok(mrr_from_ranks(&ranks_of(results, truth)?, depth))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_queries: usize,
    pub recall: BTreeMap<usize, f64>,
    pub mrr: f64,
}

impl EvalReport {
    pub fn recall_at(&self, k: usize) -> Option<f64> {
        self.recall.get(&k).copied()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalQuery {
    pub id: String,
    pub vector: Vec<f64>,
    /// Truth label, or truth id under [`Relevance::Id`].
    pub truth: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOutput {
    pub report: EvalReport,
    /// `(query_id, first_match_rank)` within the evaluation depth.
    pub per_query: Vec<(String, Option<usize>)>,
}

/// Scores every query against the index in one pass. The retrieval depth
/// and the MRR cutoff are both `max(ks)`.
pub fn evaluate(
    index: &RetrievalIndex,
    queries: &[EvalQuery],
    ks: &[usize],
    adapter: Option<&AdapterModel>,
    relevance: Relevance,
) -> Result<EvalOutput> {
    let depth = *ks.iter().max().ok_or_else(|| Error::invalid("no k values to evaluate"))?;
    if ks.contains(&0) {
        return Err(Error::invalid("k must be at least 1"));
    }
    let mut per_query = Vec::with_capacity(queries.len());
    for q in queries {
        let res = index.search(&q.vector, depth, adapter)?;
        per_query.push((q.id.clone(), first_match_rank(&res, &q.truth, relevance)));
    }
    let ranks: Vec<Option<usize>> = per_query.iter().map(|(_, r)| *r).collect();
    let recall = ks.iter().map(|&k| (k, recall_from_ranks(&ranks, k))).collect();
    Ok(EvalOutput {
        report: EvalReport {
            n_queries: queries.len(),
            recall,
            mrr: mrr_from_ranks(&ranks, depth),
        },
        per_query,
    })
}

impl EvalOutput {
    pub fn write_report(&self, path: &Path) -> Result<()> {
        let body = serde_json::to_string_pretty(&self.report)?;
        std::fs::write(path, body).map_err(|e| Error::io(path, e))
    }

    /// `query_id,first_match_rank` with an empty rank for misses.
    pub fn write_per_query_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
        let io = |e| Error::io(path, e);
        writeln!(f, "query_id,first_match_rank").map_err(io)?;
        for (id, r) in &self.per_query {
            match r {
                Some(r) => writeln!(f, "{id},{r}").map_err(io)?,
                None => writeln!(f, "{id},").map_err(io)?,
            }
        }
        f.flush().map_err(io)
    }
}
