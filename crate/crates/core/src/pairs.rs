//! Contrastive pair records shared by the miner, the augmenter and the trainer.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::jsonl;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Positive,
    Negative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairSource {
    SameLabel,
    WeightedHard,
    Random,
    SyntheticPos,
    SyntheticNeg,
}

impl PairSource {
    pub fn as_str(self) -> &'static str {
        match self {
            PairSource::SameLabel => "same_label",
            PairSource::WeightedHard => "weighted_hard",
            PairSource::Random => "random",
            PairSource::SyntheticPos => "synthetic_pos",
            PairSource::SyntheticNeg => "synthetic_neg",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContrastivePair {
    pub group_id: String,
    pub anchor_id: String,
    pub anchor_text: String,
    pub candidate_id: String,
    pub candidate_text: String,
    pub polarity: Polarity,
    pub source: PairSource,
}

pub fn save_pairs(path: &Path, pairs: &[ContrastivePair]) -> Result<()> {
    jsonl::write(path, pairs)
}

pub fn load_pairs(path: &Path) -> Result<Vec<ContrastivePair>> {
    Ok(jsonl::read(path)?.into_iter().map(|(_, p)| p).collect())
}
