//! Label-to-label similarity used as the hard-negative sampling weight.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::embed::{dot, EmbeddingProvider};
use crate::error::{Error, Result};

/// How label similarity is scored.
#[derive(Debug, Clone)]
pub enum SimilarityScorer {
    /// Jaccard over word tokens and character trigrams of the normalized label.
    Lexical,
    /// Cosine of label-text embeddings mapped to [0, 1] via (x + 1) / 2.
    Embedding(EmbeddingProvider),
}

/// Lowercase, `_`/`-` to space, collapse and trim whitespace.
pub fn normalize_label(label: &str) -> String {
    label
        .to_lowercase()
        .replace(['_', '-'], " ")
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

fn lexical_features(label: &str) -> BTreeSet<String> {
    let norm = normalize_label(label);
    let mut feats: BTreeSet<String> = norm.split(' ').map(|w| format!("w:{w}")).collect();
    let chars: Vec<char> = norm.chars().collect();
    if chars.len() < 3 {
        feats.insert(format!("c:{norm}"));
    } else {
        for w in chars.windows(3) {
            feats.insert(format!("c:{}", w.iter().collect::<String>()));
        }
    }
    feats
}

impl SimilarityScorer {
    pub fn score(&self, a: &str, b: &str) -> Result<f64> {
        if normalize_label(a).is_empty() || normalize_label(b).is_empty() {
            return Err(Error::Empty("label"));
        }
        match self {
            SimilarityScorer::Lexical => {
                let fa = lexical_features(a);
                let fb = lexical_features(b);
                let inter = fa.intersection(&fb).count();
                let union = fa.union(&fb).count();
                Ok(inter as f64 / union as f64)
            }
            SimilarityScorer::Embedding(provider) => {
                if a == b {
                    return Ok(1.0);
                }
                let va = provider.embed_text(a, a)?;
                let vb = provider.embed_text(b, b)?;
                Ok(((dot(&va.values, &vb.values) + 1.0) / 2.0).clamp(0.0, 1.0))
            }
        }
    }
}

/// Shorthand for [`SimilarityScorer::score`].
pub fn label_similarity(scorer: &SimilarityScorer, a: &str, b: &str) -> Result<f64> {
    scorer.score(a, b)
}

/// Dense symmetric similarity matrix over a fixed label list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelSimilarityMatrix {
    labels: Vec<String>,
    values: Vec<Vec<f64>>,
    #[serde(skip)]
    position: HashMap<String, usize>,
}

impl LabelSimilarityMatrix {
    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn position(&self, label: &str) -> Option<usize> {
        self.position.get(label).copied()
    }

    pub fn get(&self, a: &str, b: &str) -> Result<f64> {
        let i = self.position(a).ok_or_else(|| Error::UnknownLabel(a.to_string()))?;
        let j = self.position(b).ok_or_else(|| Error::UnknownLabel(b.to_string()))?;
        Ok(self.values[i][j])
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let body = serde_json::to_string(self)?;
        std::fs::write(path, body).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let body = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut m: LabelSimilarityMatrix = serde_json::from_str(&body)?;
        m.position = index_labels(&m.labels)?;
        if m.values.len() != m.labels.len() || m.values.iter().any(|r| r.len() != m.labels.len()) {
            return Err(Error::invalid("similarity matrix is not square over its labels"));
        }
        Ok(m)
    }
}

fn index_labels(labels: &[String]) -> Result<HashMap<String, usize>> {
    let mut position = HashMap::with_capacity(labels.len());
    for (i, l) in labels.iter().enumerate() {
        if position.insert(l.clone(), i).is_some() {
            return Err(Error::DuplicateLabel(l.clone()));
        }
    }
    Ok(position)
}

pub fn similarity_matrix(scorer: &SimilarityScorer, labels: &[String]) -> Result<LabelSimilarityMatrix> {
    let position = index_labels(labels)?;
    let n = labels.len();
    let mut values = vec![vec![0.0; n]; n];
    for i in 0..n {
        values[i][i] = scorer.score(&labels[i], &labels[i])?;
        for j in i + 1..n {
            let s = scorer.score(&labels[i], &labels[j])?;
            values[i][j] = s;
            values[j][i] = s;
        }
    }
    Ok(LabelSimilarityMatrix {
        labels: labels.to_vec(),
        values,
        position,
    })
}

/// The `m` labels most similar to `anchor`, excluding the anchor itself.
/// Ties go to the lexicographically smaller label.
pub fn top_similar_labels(matrix: &LabelSimilarityMatrix, anchor: &str, m: usize) -> Result<Vec<String>> {
    let i = matrix
        .position(anchor)
        .ok_or_else(|| Error::UnknownLabel(anchor.to_string()))?;
    if m == 0 {
        return Err(Error::invalid("top-m requires m >= 1"));
    }
    let mut others: Vec<(usize, f64)> = matrix.values[i]
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(j, &s)| (j, s))
        .collect();
    others.sort_by(|a, b| {
        b.1.total_cmp(&a.1)
            .then_with(|| matrix.labels[a.0].cmp(&matrix.labels[b.0]))
    });
    Ok(others
        .into_iter()
        .take(m)
        .map(|(j, _)| matrix.labels[j].clone())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::HashedNgram;
    use proptest::prelude::*;

    // Independent oracle: builds the feature sets by hand-rolled string slicing.
    fn oracle_lexical(a: &str, b: &str) -> f64 {
        fn feats(s: &str) -> Vec<String> {
            let mut t = String::new();
            for c in s.chars() {
                let c = if c == '_' || c == '-' { ' ' } else { c };
                t.extend(c.to_lowercase());
            }
            let t = t.split_whitespace().collect::<Vec<_>>().join(" ");
            let mut out: Vec<String> = t.split(' ').map(|w| format!("w:{w}")).collect();
            let cs: Vec<char> = t.chars().collect();
            if cs.len() < 3 {
                out.push(format!("c:{t}"));
            }
            let mut i = 0;
            while i + 3 <= cs.len() {
                out.push(format!("c:{}{}{}", cs[i], cs[i + 1], cs[i + 2]));
                i += 1;
            }
            out.sort();
            out.dedup();
            out
        }
        let fa = feats(a);
        let fb = feats(b);
        let inter = fa.iter().filter(|x| fb.contains(x)).count();
        let union = fa.len() + fb.len() - inter;
        inter as f64 / union as f64
    }

    #[test]
    fn identity_scores_one() {
        assert_eq!(SimilarityScorer::Lexical.score("cancel_order", "cancel_order").unwrap(), 1.0);
    }

    #[test]
    fn word_only_jaccard_and_full_score() {
        // Word tokens alone: {cancel} / {cancel, order, subscription} = 1/3.
        let wa: BTreeSet<&str> = "cancel order".split(' ').collect();
        let wb: BTreeSet<&str> = "cancel subscription".split(' ').collect();
        let w = wa.intersection(&wb).count() as f64 / wa.union(&wb).count() as f64;
        assert!((w - 1.0 / 3.0).abs() < 1e-15);

        // Token+trigram score, frozen from the oracle: 6 shared / 25 total.
        let full = SimilarityScorer::Lexical.score("cancel order", "cancel subscription").unwrap();
        assert!((oracle_lexical("cancel order", "cancel subscription") - 6.0 / 25.0).abs() < 1e-15);
        assert!((full - 6.0 / 25.0).abs() < 1e-15);
    }

    #[test]
    fn disjoint_labels_score_zero() {
        assert_eq!(SimilarityScorer::Lexical.score("abc", "xyz").unwrap(), 0.0);
    }

    #[test]
    fn normalization_is_applied() {
        assert_eq!(normalize_label("  Cancel__Order-now "), "cancel order now");
        assert_eq!(SimilarityScorer::Lexical.score("Cancel_Order", "cancel order").unwrap(), 1.0);
    }

    #[test]
    fn empty_label_errors() {
        assert!(SimilarityScorer::Lexical.score("", "a").is_err());
    }

    #[test]
    fn matrix_single_label() {
        let m = similarity_matrix(&SimilarityScorer::Lexical, &["A".to_string()]).unwrap();
        assert_eq!(m.values(), [vec![1.0]]);
    }

    #[test]
    fn matrix_rejects_duplicates() {
        let labels = vec!["a".to_string(), "a".to_string()];
        assert!(matches!(
            similarity_matrix(&SimilarityScorer::Lexical, &labels),
            Err(Error::DuplicateLabel(_))
        ));
    }

    fn labels20() -> Vec<String> {
        let words = ["cancel", "order", "refund", "status", "track", "billing", "change", "address"];
        (0..20)
            .map(|i| format!("{}_{}_{}", words[i % 8], words[(i * 3 + 1) % 8], i))
            .collect()
    }

    #[test]
    fn matrix_symmetric_and_matches_pairwise() {
        let labels = labels20();
        let scorer = SimilarityScorer::Lexical;
        let m = similarity_matrix(&scorer, &labels).unwrap();
        for i in 0..20 {
            assert_eq!(m.values()[i][i], 1.0);
            for j in 0..20 {
                assert_eq!(m.values()[i][j], m.values()[j][i]);
                let brute = oracle_lexical(&labels[i], &labels[j]);
                assert!((m.values()[i][j] - brute).abs() < 1e-15);
                assert!((0.0..=1.0).contains(&m.values()[i][j]));
            }
        }
    }

    #[test]
    fn embedding_mode_range_and_identity() {
        let scorer = SimilarityScorer::Embedding(EmbeddingProvider::HashedNgram(
            HashedNgram::new(64, 1).unwrap(),
        ));
        let labels = labels20();
        let m = similarity_matrix(&scorer, &labels).unwrap();
        for i in 0..labels.len() {
            assert_eq!(m.values()[i][i], 1.0);
            for j in 0..labels.len() {
                assert!((0.0..=1.0).contains(&m.values()[i][j]));
                assert_eq!(m.values()[i][j], m.values()[j][i]);
            }
        }
    }

    fn manual_matrix(labels: &[&str], rows: Vec<Vec<f64>>) -> LabelSimilarityMatrix {
        let labels: Vec<String> = labels.iter().map(|s| s.to_string()).collect();
        LabelSimilarityMatrix {
            position: index_labels(&labels).unwrap(),
            labels,
            values: rows,
        }
    }

    #[test]
    fn top_similar_tie_break() {
        let m = manual_matrix(
            &["A", "C", "B", "D"],
            vec![
                vec![1.0, 0.9, 0.9, 0.1],
                vec![0.9, 1.0, 0.0, 0.0],
                vec![0.9, 0.0, 1.0, 0.0],
                vec![0.1, 0.0, 0.0, 1.0],
            ],
        );
        assert_eq!(top_similar_labels(&m, "A", 2).unwrap(), ["B", "C"]);
    }

    #[test]
    fn top_similar_pool_exhaustion_and_errors() {
        let m = similarity_matrix(&SimilarityScorer::Lexical, &["x".into(), "y".into()]).unwrap();
        assert_eq!(top_similar_labels(&m, "x", 3).unwrap(), ["y"]);
        assert!(matches!(top_similar_labels(&m, "z", 1), Err(Error::UnknownLabel(_))));
    }

    #[test]
    fn matrix_json_roundtrip() {
        let m = similarity_matrix(&SimilarityScorer::Lexical, &labels20()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.json");
        m.save(&p).unwrap();
        let back = LabelSimilarityMatrix::load(&p).unwrap();
        assert_eq!(back, m);
        let raw: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&p).unwrap()).unwrap();
        assert!(raw.get("labels").is_some() && raw.get("values").is_some());
    }

    proptest! {
        #[test]
        fn lexical_symmetric_bounded(a in "[a-z_ -]{1,12}", b in "[a-z_ -]{1,12}") {
            prop_assume!(!normalize_label(&a).is_empty() && !normalize_label(&b).is_empty());
            let s = SimilarityScorer::Lexical;
            let ab = s.score(&a, &b).unwrap();
            prop_assert_eq!(ab, s.score(&b, &a).unwrap());
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert_eq!(s.score(&a, &a).unwrap(), 1.0);
            prop_assert!((ab - oracle_lexical(&a, &b)).abs() < 1e-15);
        }

        #[test]
        fn top_similar_never_contains_anchor(m in 1usize..25, pick in 0usize..20) {
            let labels = labels20();
            let mat = similarity_matrix(&SimilarityScorer::Lexical, &labels).unwrap();
            let top = top_similar_labels(&mat, &labels[pick], m).unwrap();
            prop_assert!(!top.contains(&labels[pick]));
            prop_assert_eq!(top.len(), m.min(19));
            prop_assert_eq!(top, top_similar_labels(&mat, &labels[pick], m).unwrap());
        }
    }
}
