//! Positive and negative pair mining over an index/training split.
//!
//! For every training anchor (already translated to the target language)
//! one same-label index query becomes the positive. Negatives come from
//! index queries with a different label: hard negatives are drawn without
//! replacement with probability proportional to label similarity, random
//! negatives uniformly. Which mix is used depends on [`Strategy`].

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kb::{KnowledgeBaseSplit, LabeledQuery};
use crate::label_sim::{top_similar_labels, LabelSimilarityMatrix};
use crate::pairs::{ContrastivePair, PairSource, Polarity};
use crate::rng::{substream, StreamRng};
use crate::sampling::{uniform_index, weighted_sample_without_replacement};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// k weighted-hard negatives plus random ones to fill the group.
    Hybrid,
    RandomOnly,
    HardOnly,
    /// Weighted-hard negatives restricted to the top-m most similar labels.
    HardestOnly,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::Hybrid,
        Strategy::RandomOnly,
        Strategy::HardOnly,
        Strategy::HardestOnly,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Hybrid => "hybrid",
            Strategy::RandomOnly => "random_only",
            Strategy::HardOnly => "hard_only",
            Strategy::HardestOnly => "hardest_only",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| {
                Error::invalid(format!(
                    "unknown strategy {s:?} (expected hybrid, random_only, hard_only or hardest_only)"
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiningConfig {
    pub strategy: Strategy,
    /// Number of weighted-hard negatives per anchor.
    pub k: usize,
    pub negatives_per_anchor: usize,
    pub hardest_pool_m: usize,
    pub seed: u64,
}

impl MiningConfig {
    /// Derives `k` from the strategy: hybrid keeps one random slot.
    pub fn new(strategy: Strategy, negatives_per_anchor: usize, seed: u64) -> Result<Self> {
        let k = match strategy {
            Strategy::Hybrid => negatives_per_anchor
                .checked_sub(1)
                .ok_or_else(|| Error::invalid("hybrid needs at least one negative"))?,
            Strategy::RandomOnly => 0,
            Strategy::HardOnly | Strategy::HardestOnly => negatives_per_anchor,
        };
        let cfg = MiningConfig {
            strategy,
            k,
            negatives_per_anchor,
            hardest_pool_m: 3,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Builds a config from an explicit hard-negative count.
    pub fn with_k(strategy: Strategy, k: usize, seed: u64) -> Result<Self> {
        let negatives = match strategy {
            Strategy::Hybrid => k + 1,
            Strategy::RandomOnly if k != 0 => {
                return Err(Error::invalid("random_only requires k = 0"));
            }
            Strategy::RandomOnly => 3,
            Strategy::HardOnly | Strategy::HardestOnly => k,
        };
        Self::new(strategy, negatives, seed)
    }

    pub fn validate(&self) -> Result<()> {
        if self.negatives_per_anchor == 0 {
            return Err(Error::invalid("negatives_per_anchor must be positive"));
        }
        if self.hardest_pool_m == 0 {
            return Err(Error::invalid("hardest_pool_m must be positive"));
        }
        let expected = match self.strategy {
            Strategy::Hybrid => self.negatives_per_anchor - 1,
            Strategy::RandomOnly => 0,
            Strategy::HardOnly | Strategy::HardestOnly => self.negatives_per_anchor,
        };
        if self.k != expected {
            return Err(Error::invalid(format!(
                "strategy {} with {} negatives requires k = {expected}, got {}",
                self.strategy, self.negatives_per_anchor, self.k
            )));
        }
        Ok(())
    }

    fn random_slots(&self) -> usize {
        self.negatives_per_anchor - self.k
    }
}

/// Index-set lookup by label.
pub struct IndexView<'a> {
    entries: &'a [LabeledQuery],
    by_label: HashMap<&'a str, Vec<usize>>,
}

impl<'a> IndexView<'a> {
    pub fn new(entries: &'a [LabeledQuery]) -> Self {
        let mut by_label: HashMap<&str, Vec<usize>> = HashMap::new();
        for (i, e) in entries.iter().enumerate() {
            by_label.entry(e.label.as_str()).or_default().push(i);
        }
        IndexView { entries, by_label }
    }

    pub fn entries(&self) -> &'a [LabeledQuery] {
        self.entries
    }

    pub fn with_label(&self, label: &str) -> &[usize] {
        self.by_label.get(label).map_or(&[], Vec::as_slice)
    }

    pub fn has_label(&self, label: &str) -> bool {
        !self.with_label(label).is_empty()
    }
}

pub fn group_id(anchor_id: &str) -> String {
    format!("g-{anchor_id}")
}

fn pair(anchor: &LabeledQuery, anchor_text: &str, cand: &LabeledQuery, polarity: Polarity, source: PairSource) -> ContrastivePair {
    ContrastivePair {
        group_id: group_id(&anchor.id),
        anchor_id: anchor.id.clone(),
        anchor_text: anchor_text.to_string(),
        candidate_id: cand.id.clone(),
        candidate_text: cand.text.clone(),
        polarity,
        source,
    }
}

/// Uniformly picks a same-label index query; `None` means the anchor is skipped.
pub fn mine_positive(
    anchor: &LabeledQuery,
    anchor_translated: &str,
    index: &IndexView<'_>,
    rng: &mut StreamRng,
) -> Option<ContrastivePair> {
    let same = index.with_label(&anchor.label);
    let pick = uniform_index(same.len(), rng)?;
    let cand = &index.entries()[same[pick]];
    Some(pair(anchor, anchor_translated, cand, Polarity::Positive, PairSource::SameLabel))
}

/// Draws up to `k` distinct different-label index queries, weighted by the
/// similarity of their label to the anchor's. With `hardest_pool` set, only
/// labels among the anchor's top-m most similar are eligible.
pub fn sample_hard_negatives<'a>(
    anchor: &LabeledQuery,
    index: &IndexView<'a>,
    sim: &LabelSimilarityMatrix,
    k: usize,
    hardest_pool: Option<usize>,
    rng: &mut StreamRng,
) -> Result<Vec<&'a LabeledQuery>> {
    let allowed: Option<HashSet<String>> = match hardest_pool {
        Some(m) => Some(top_similar_labels(sim, &anchor.label, m)?.into_iter().collect()),
        None => None,
    };
    let row = sim
        .position(&anchor.label)
        .map(|i| &sim.values()[i])
        .ok_or_else(|| Error::UnknownLabel(anchor.label.clone()))?;
    let mut pool = Vec::new();
    let mut weights = Vec::new();
    for e in index.entries() {
        if e.label == anchor.label {
            continue;
        }
        if let Some(allowed) = &allowed {
            if !allowed.contains(&e.label) {
                continue;
            }
        }
        let j = sim
            .position(&e.label)
            .ok_or_else(|| Error::UnknownLabel(e.label.clone()))?;
        pool.push(e);
        weights.push(row[j]);
    }
    Ok(weighted_sample_without_replacement(&weights, k, rng)
        .into_iter()
        .map(|i| pool[i])
        .collect())
}

/// Uniform different-label index query not in `exclude`.
pub fn sample_random_negative<'a>(
    anchor: &LabeledQuery,
    index: &IndexView<'a>,
    exclude: &HashSet<&str>,
    rng: &mut StreamRng,
) -> Option<&'a LabeledQuery> {
    let pool: Vec<&LabeledQuery> = index
        .entries()
        .iter()
        .filter(|e| e.label != anchor.label && !exclude.contains(e.id.as_str()))
        .collect();
    uniform_index(pool.len(), rng).map(|i| pool[i])
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MiningReport {
    pub anchors_total: usize,
    pub anchors_mined: usize,
    pub skipped_no_positive: usize,
    pub skipped_ids: Vec<String>,
    pub truncated_groups: usize,
    pub truncated_ids: Vec<String>,
    pub positives: usize,
    pub negatives: usize,
    pub by_source: BTreeMap<String, usize>,
}

impl MiningReport {
    pub fn skip_rate(&self) -> f64 {
        if self.anchors_total == 0 {
            0.0
        } else {
            self.skipped_no_positive as f64 / self.anchors_total as f64
        }
    }
}

/// Mines one group per training anchor, in ascending anchor-id order.
pub fn mine_dataset(
    split: &KnowledgeBaseSplit,
    translations: &HashMap<String, String>,
    sim: &LabelSimilarityMatrix,
    cfg: &MiningConfig,
) -> Result<(Vec<ContrastivePair>, MiningReport)> {
    cfg.validate()?;
    let index = IndexView::new(&split.index_set);
    let mut anchors: Vec<&LabeledQuery> = split.training_set.iter().collect();
    anchors.sort_by(|a, b| a.id.cmp(&b.id));

    let hardest = (cfg.strategy == Strategy::HardestOnly).then_some(cfg.hardest_pool_m);
    let mut report = MiningReport {
        anchors_total: anchors.len(),
        ..Default::default()
    };
    let mut out = Vec::with_capacity(anchors.len() * (1 + cfg.negatives_per_anchor));

    for anchor in anchors {
        if !index.has_label(&anchor.label) {
            report.skipped_no_positive += 1;
            report.skipped_ids.push(anchor.id.clone());
            continue;
        }
        let text = translations
            .get(&anchor.id)
            .filter(|t| !t.trim().is_empty())
            .ok_or_else(|| Error::MissingTranslation(anchor.id.clone()))?;
        let mut rng = substream(cfg.seed, "mine", &anchor.id);

        let Some(positive) = mine_positive(anchor, text, &index, &mut rng) else {
            unreachable!("label presence checked above");
        };
        let mut group = vec![positive];

        let hard = sample_hard_negatives(anchor, &index, sim, cfg.k, hardest, &mut rng)?;
        let mut chosen: HashSet<&str> = hard.iter().map(|e| e.id.as_str()).collect();
        for e in &hard {
            group.push(pair(anchor, text, e, Polarity::Negative, PairSource::WeightedHard));
        }
        for _ in 0..cfg.random_slots() {
            match sample_random_negative(anchor, &index, &chosen, &mut rng) {
                Some(e) => {
                    chosen.insert(e.id.as_str());
                    group.push(pair(anchor, text, e, Polarity::Negative, PairSource::Random));
                }
                None => break,
            }
        }

        let negatives = group.len() - 1;
        if negatives < cfg.negatives_per_anchor {
            report.truncated_groups += 1;
            report.truncated_ids.push(anchor.id.clone());
        }
        report.anchors_mined += 1;
        report.positives += 1;
        report.negatives += negatives;
        for p in &group {
            *report.by_source.entry(p.source.as_str().to_string()).or_default() += 1;
        }
        out.extend(group);
    }
    Ok((out, report))
}
