//! Resumable batch steps that sit between the pure modules and the CLI:
//! translation caching, append-only augmentation and eval-set assembly.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::embed::EmbeddingProvider;
use crate::error::{Error, Result};
use crate::jsonl;
use crate::kb::{LabeledQuery, UnlabeledQuerySet};
use crate::pairs::ContrastivePair;
use crate::retrieval::EvalQuery;
use crate::textgen::{group_pairs, run_bounded, synthetic_group_id, GenError, GenerationProvider, QueryFailure};
use crate::train::EvalSet;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranslationRecord {
    pub id: String,
    pub text: String,
}

/// Per-id failure from a provider call, kept typed so callers can tell
/// transport problems from bad data.
#[derive(Debug, Clone, PartialEq)]
pub struct ItemError {
    pub id: String,
    pub error: GenError,
}

fn chunk_size(provider: &GenerationProvider) -> usize {
    provider.parallelism() * 8
}

/// Translates every item not already present in `cache` (a JSONL file of
/// [`TranslationRecord`]), appending results chunk by chunk so an
/// interrupted run resumes where it stopped. Returns all translations known
/// after the run and the per-item failures.
pub fn translate_with_cache(
    provider: &GenerationProvider,
    items: &[LabeledQuery],
    target_language: &str,
    cache: Option<&Path>,
) -> Result<(HashMap<String, String>, Vec<ItemError>)> {
    let mut known: HashMap<String, String> = HashMap::new();
    if let Some(path) = cache {
        jsonl::truncate_partial_tail(path)?;
        if path.exists() {
            for (_, r) in jsonl::read::<TranslationRecord>(path)? {
                known.insert(r.id, r.text);
            }
        }
    }
    let todo: Vec<&LabeledQuery> = items.iter().filter(|q| !known.contains_key(&q.id)).collect();
    let mut failures = Vec::new();
    for chunk in todo.chunks(chunk_size(provider)) {
        let results = run_bounded(chunk.len(), provider.parallelism(), |i| {
            provider.translate(&chunk[i].text, target_language)
        });
        let mut fresh = Vec::new();
        for (q, r) in chunk.iter().zip(results) {
            match r {
                Ok(text) => fresh.push(TranslationRecord { id: q.id.clone(), text }),
                Err(error) => failures.push(ItemError { id: q.id.clone(), error }),
            }
        }
        if let Some(path) = cache {
            jsonl::append(path, &fresh)?;
        }
        known.extend(fresh.into_iter().map(|r| (r.id, r.text)));
    }
    Ok((known, failures))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentReport {
    pub n_queries: usize,
    /// Groups present in the output file after this run, including resumed ones.
    pub completed: usize,
    pub resumed: usize,
    pub failures: Vec<QueryFailure>,
}

/// Appends synthetic groups for `queries` to `out`, skipping queries whose
/// group is already in the file. Previously written lines are never
/// rewritten.
pub fn augment_to_file(
    provider: &GenerationProvider,
    queries: &UnlabeledQuerySet,
    out: &Path,
) -> Result<(AugmentReport, Vec<ItemError>)> {
    jsonl::truncate_partial_tail(out)?;
    let mut done: HashSet<String> = HashSet::new();
    if out.exists() {
        for (_, p) in jsonl::read::<ContrastivePair>(out)? {
            done.insert(p.group_id);
        }
    }
    let all = queries.queries();
    let resumed = all.iter().filter(|q| done.contains(&synthetic_group_id(&q.id))).count();
    let todo: Vec<_> = all
        .iter()
        .filter(|q| !done.contains(&synthetic_group_id(&q.id)))
        .collect();
    let mut errors = Vec::new();
    let mut completed = resumed;
    if todo.is_empty() && !out.exists() {
        jsonl::write::<ContrastivePair>(out, &[])?;
    }
    for chunk in todo.chunks(chunk_size(provider)) {
        let results = run_bounded(chunk.len(), provider.parallelism(), |i| {
            provider.synthesize_group(&chunk[i].text)
        });
        let mut fresh = Vec::new();
        for (q, r) in chunk.iter().zip(results) {
            match r {
                Ok(g) => {
                    fresh.extend(group_pairs(&q.id, &g));
                    completed += 1;
                }
                Err(error) => errors.push(ItemError { id: q.id.clone(), error }),
            }
        }
        jsonl::append(out, &fresh)?;
    }
    let report = AugmentReport {
        n_queries: all.len(),
        completed,
        resumed,
        failures: errors
            .iter()
            .map(|e| QueryFailure {
                id: e.id.clone(),
                error: e.error.to_string(),
            })
            .collect(),
    };
    Ok((report, errors))
}

/// Embeds index entries with `kb` and labeled queries with `queries`.
pub fn build_eval_set(
    index: &[LabeledQuery],
    eval: &[LabeledQuery],
    kb: &EmbeddingProvider,
    queries: &EmbeddingProvider,
    ks: &[usize],
) -> Result<EvalSet> {
    if ks.is_empty() {
        return Err(Error::invalid("no k values to evaluate"));
    }
    let index = index
        .iter()
        .map(|e| Ok((e.clone(), kb.embed_text(&e.id, &e.text)?)))
        .collect::<Result<Vec<_>>>()?;
    let queries = eval
        .iter()
        .map(|q| {
            Ok(EvalQuery {
                id: q.id.clone(),
                vector: queries.embed_text(&q.id, &q.text)?.values,
                truth: q.label.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalSet {
        index,
        queries,
        ks: ks.to_vec(),
    })
}
