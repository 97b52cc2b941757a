//! Knowledge base model, validation and the index/training split.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jsonl;
use crate::rng::substream;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledQuery {
    pub id: String,
    pub text: String,
    pub label: String,
}

impl LabeledQuery {
    pub fn new(id: impl Into<String>, text: impl Into<String>, label: impl Into<String>) -> Self {
        LabeledQuery {
            id: id.into(),
            text: text.into(),
            label: label.into(),
        }
    }
}

/// A validated, monolingual collection of labeled example queries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KnowledgeBase {
    entries: Vec<LabeledQuery>,
    language: String,
}

impl KnowledgeBase {
    pub fn new(entries: Vec<LabeledQuery>, language: impl Into<String>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Empty("knowledge base"));
        }
        let mut seen = HashSet::with_capacity(entries.len());
        for e in &entries {
            check_fields(e)?;
            if !seen.insert(e.id.as_str()) {
                return Err(Error::DuplicateId(e.id.clone()));
            }
        }
        Ok(KnowledgeBase {
            entries,
            language: language.into(),
        })
    }

    pub fn entries(&self) -> &[LabeledQuery] {
        &self.entries
    }

    pub fn language(&self) -> &str {
        &self.language
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Distinct labels in first-appearance order.
    pub fn labels(&self) -> Vec<String> {
        let mut seen = HashSet::new();
        self.entries
            .iter()
            .filter(|e| seen.insert(e.label.as_str()))
            .map(|e| e.label.clone())
            .collect()
    }
}

fn check_fields(e: &LabeledQuery) -> Result<()> {
    if e.id.is_empty() {
        return Err(Error::invalid("empty id"));
    }
    if e.text.trim().is_empty() {
        return Err(Error::invalid(format!("empty text for id {:?}", e.id)));
    }
    if e.label.is_empty() {
        return Err(Error::invalid(format!("empty label for id {:?}", e.id)));
    }
    Ok(())
}

pub fn load_kb(path: &Path, language: &str) -> Result<KnowledgeBase> {
    let rows: Vec<(usize, LabeledQuery)> = jsonl::read(path)?;
    if rows.is_empty() {
        return Err(Error::Empty("knowledge base"));
    }
    let mut seen = HashSet::with_capacity(rows.len());
    for (line, e) in &rows {
        check_fields(e).map_err(|err| Error::Parse {
            path: path.to_path_buf(),
            line: *line,
            message: err.to_string(),
        })?;
        if !seen.insert(e.id.clone()) {
            return Err(Error::DuplicateId(e.id.clone()));
        }
    }
    KnowledgeBase::new(rows.into_iter().map(|(_, e)| e).collect(), language)
}

pub fn save_kb(kb: &KnowledgeBase, path: &Path) -> Result<()> {
    jsonl::write(path, kb.entries())
}

/// Target-language queries without labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnlabeledQuerySet {
    queries: Vec<UnlabeledQuery>,
    language: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnlabeledQuery {
    pub id: String,
    pub text: String,
}

impl UnlabeledQuerySet {
    pub fn new(queries: Vec<UnlabeledQuery>, language: impl Into<String>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(queries.len());
        for q in &queries {
            if q.id.is_empty() {
                return Err(Error::invalid("empty query id"));
            }
            if q.text.trim().is_empty() {
                return Err(Error::invalid(format!("empty text for query {:?}", q.id)));
            }
            if !seen.insert(q.id.as_str()) {
                return Err(Error::DuplicateId(q.id.clone()));
            }
        }
        Ok(UnlabeledQuerySet {
            queries,
            language: language.into(),
        })
    }

    pub fn queries(&self) -> &[UnlabeledQuery] {
        &self.queries
    }

    pub fn language(&self) -> &str {
        &self.language
    }
}

/// Loads `{"id","text"}` records. Extra fields (such as a label) are ignored.
pub fn load_queries(path: &Path, language: &str) -> Result<UnlabeledQuerySet> {
    let rows: Vec<(usize, UnlabeledQuery)> = jsonl::read(path)?;
    UnlabeledQuerySet::new(rows.into_iter().map(|(_, q)| q).collect(), language)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DuplicateText {
    pub text: String,
    pub ids: Vec<String>,
    pub labels: Vec<String>,
    pub cross_label: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub n_entries: usize,
    pub label_histogram: BTreeMap<String, usize>,
    pub singleton_labels: Vec<String>,
    pub duplicate_texts: Vec<DuplicateText>,
}

pub fn validate_kb(kb: &KnowledgeBase) -> ValidationReport {
    let mut hist: BTreeMap<String, usize> = BTreeMap::new();
    let mut by_text: BTreeMap<&str, Vec<&LabeledQuery>> = BTreeMap::new();
    for e in kb.entries() {
        *hist.entry(e.label.clone()).or_default() += 1;
        by_text.entry(e.text.as_str()).or_default().push(e);
    }
    let singleton_labels = hist
        .iter()
        .filter(|(_, &n)| n == 1)
        .map(|(l, _)| l.clone())
        .collect();
    let duplicate_texts = by_text
        .into_iter()
        .filter(|(_, es)| es.len() > 1)
        .map(|(text, es)| {
            let mut labels: Vec<String> = es.iter().map(|e| e.label.clone()).collect();
            labels.sort();
            labels.dedup();
            DuplicateText {
                text: text.to_string(),
                ids: es.iter().map(|e| e.id.clone()).collect(),
                cross_label: labels.len() > 1,
                labels,
            }
        })
        .collect();
    ValidationReport {
        n_entries: kb.len(),
        label_histogram: hist,
        singleton_labels,
        duplicate_texts,
    }
}

/// Disjoint index (retrieval corpus) and training (pair generation) views.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KnowledgeBaseSplit {
    pub index_set: Vec<LabeledQuery>,
    pub training_set: Vec<LabeledQuery>,
    /// Labels with a single entry; under stratification that entry is in the index set.
    pub singleton_labels: Vec<String>,
}

/// Split manifest written next to the two JSONL halves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub seed: u64,
    pub index_fraction: f64,
    pub stratified: bool,
    pub index_ids: Vec<String>,
}

/// Splits the knowledge base into index and training halves.
///
/// The index side receives `round(index_fraction * N)` entries. Under
/// stratification every label with at least two entries lands on both
/// sides, labels are apportioned by largest remainder, and the target is
/// met exactly whenever those per-label bounds allow it. Which entries of
/// a label go to the index is decided by a per-label stream, so the
/// result does not depend on the order labels appear in.
pub fn split_kb(
    kb: &KnowledgeBase,
    index_fraction: f64,
    seed: u64,
    stratified: bool,
) -> Result<KnowledgeBaseSplit> {
    if !(index_fraction > 0.0 && index_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "index fraction {index_fraction} outside (0, 1)"
        )));
    }
    let n = kb.len();
    let target = (index_fraction * n as f64).round() as usize;
    if target < 1 || target >= n {
        return Err(Error::invalid(format!(
            "knowledge base of {n} entries too small for index fraction {index_fraction}"
        )));
    }

    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, e) in kb.entries().iter().enumerate() {
        groups.entry(e.label.as_str()).or_default().push(i);
    }
    let singleton_labels: Vec<String> = groups
        .iter()
        .filter(|(_, v)| v.len() == 1)
        .map(|(l, _)| l.to_string())
        .collect();

    let mut in_index = vec![false; n];
    if stratified {
        let quotas = apportion(&groups, index_fraction, target);
        for ((label, members), quota) in groups.iter().zip(quotas) {
            let mut order = members.clone();
            order.shuffle(&mut substream(seed, "split", label));
            for &i in &order[..quota] {
                in_index[i] = true;
            }
        }
    } else {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut substream(seed, "split", ""));
        for &i in &order[..target] {
            in_index[i] = true;
        }
    }

    let (index_set, training_set): (Vec<_>, Vec<_>) = kb
        .entries()
        .iter()
        .cloned()
        .zip(in_index)
        .partition(|(_, idx)| *idx);
    let index_set: Vec<LabeledQuery> = index_set.into_iter().map(|(e, _)| e).collect();
    let training_set: Vec<LabeledQuery> = training_set.into_iter().map(|(e, _)| e).collect();
    if index_set.is_empty() || training_set.is_empty() {
        return Err(Error::invalid("split left one side empty"));
    }
    Ok(KnowledgeBaseSplit {
        index_set,
        training_set,
        singleton_labels,
    })
}

/// Per-label index quotas (in `groups` order) summing as close to `target` as bounds allow.
fn apportion(groups: &BTreeMap<&str, Vec<usize>>, fraction: f64, target: usize) -> Vec<usize> {
    struct Slot {
        quota: usize,
        lo: usize,
        hi: usize,
        remainder: f64,
    }
    let mut slots: Vec<Slot> = groups
        .values()
        .map(|m| {
            let size = m.len();
            let (lo, hi) = if size == 1 { (1, 1) } else { (1, size - 1) };
            let exact = fraction * size as f64;
            Slot {
                quota: (exact.floor() as usize).clamp(lo, hi),
                lo,
                hi,
                remainder: exact - exact.floor(),
            }
        })
        .collect();

    let mut total: usize = slots.iter().map(|s| s.quota).sum();
    // Grow the largest remainders first, shrink the smallest first; ties by label order.
    let mut order: Vec<usize> = (0..slots.len()).collect();
    order.sort_by(|&a, &b| slots[b].remainder.total_cmp(&slots[a].remainder).then(a.cmp(&b)));
    while total < target {
        let mut moved = false;
        for &i in &order {
            if total == target {
                break;
            }
            if slots[i].quota < slots[i].hi {
                slots[i].quota += 1;
                total += 1;
                moved = true;
            }
        }
        if !moved {
            break;
        }
    }
    while total > target {
        let mut moved = false;
        for &i in order.iter().rev() {
            if total == target {
                break;
            }
            if slots[i].quota > slots[i].lo {
                slots[i].quota -= 1;
                total -= 1;
                moved = true;
            }
        }
        if !moved {
            break;
        }
    }
    slots.into_iter().map(|s| s.quota).collect()
}

impl KnowledgeBaseSplit {
    pub fn manifest(&self, seed: u64, index_fraction: f64, stratified: bool) -> SplitManifest {
        SplitManifest {
            seed,
            index_fraction,
            stratified,
            index_ids: self.index_set.iter().map(|e| e.id.clone()).collect(),
        }
    }

    /// Writes `index.jsonl`, `train.jsonl` and `split.json` into `dir`.
    pub fn save(&self, dir: &Path, manifest: &SplitManifest) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        jsonl::write(&dir.join("index.jsonl"), &self.index_set)?;
        jsonl::write(&dir.join("train.jsonl"), &self.training_set)?;
        let path = dir.join("split.json");
        let body = serde_json::to_string_pretty(manifest)?;
        std::fs::write(&path, body).map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: &Path, language: &str) -> Result<Self> {
        let index = load_kb(&dir.join("index.jsonl"), language)?;
        let train = load_kb(&dir.join("train.jsonl"), language)?;
        let ids: HashSet<&str> = index.entries().iter().map(|e| e.id.as_str()).collect();
        if let Some(e) = train.entries().iter().find(|e| ids.contains(e.id.as_str())) {
            return Err(Error::DuplicateId(e.id.clone()));
        }
        Ok(KnowledgeBaseSplit {
            index_set: index.entries().to_vec(),
            training_set: train.entries().to_vec(),
            singleton_labels: Vec::new(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn kb_from(spec: &[(&str, &str)]) -> KnowledgeBase {
        let entries = spec
            .iter()
            .map(|(id, label)| LabeledQuery::new(*id, format!("text {id}"), *label))
            .collect();
        KnowledgeBase::new(entries, "en").unwrap()
    }

    #[test]
    fn load_preserves_order() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("kb.jsonl");
        std::fs::write(
            &p,
            "{\"id\":\"a\",\"text\":\"hi\",\"label\":\"L1\"}\n{\"id\":\"b\",\"text\":\"yo\",\"label\":\"L2\"}\n",
        )
        .unwrap();
        let kb = load_kb(&p, "en").unwrap();
        let ids: Vec<_> = kb.entries().iter().map(|e| e.id.as_str()).collect();
        assert_eq!(ids, ["a", "b"]);
        assert_eq!(kb.entries()[1].label, "L2");
    }

    #[test]
    fn load_rejects_duplicate_id() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("kb.jsonl");
        std::fs::write(
            &p,
            "{\"id\":\"a\",\"text\":\"hi\",\"label\":\"L1\"}\n{\"id\":\"a\",\"text\":\"yo\",\"label\":\"L2\"}\n",
        )
        .unwrap();
        let err = load_kb(&p, "en").unwrap_err();
        assert!(matches!(&err, Error::DuplicateId(id) if id == "a"));
        assert!(err.to_string().contains("\"a\""));
    }

    #[test]
    fn load_rejects_empty_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("kb.jsonl");
        std::fs::write(&p, "").unwrap();
        let err = load_kb(&p, "en").unwrap_err();
        assert_eq!(err.to_string(), "empty knowledge base");
    }

    #[test]
    fn load_reports_empty_field_with_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("kb.jsonl");
        std::fs::write(
            &p,
            "{\"id\":\"a\",\"text\":\"hi\",\"label\":\"L1\"}\n{\"id\":\"b\",\"text\":\"\",\"label\":\"L2\"}\n",
        )
        .unwrap();
        assert!(matches!(load_kb(&p, "en").unwrap_err(), Error::Parse { line: 2, .. }));
    }

    #[test]
    fn validation_histogram_and_singletons() {
        let kb = kb_from(&[("a", "L1"), ("b", "L1"), ("c", "L2")]);
        let r = validate_kb(&kb);
        assert_eq!(r.label_histogram["L1"], 2);
        assert_eq!(r.label_histogram["L2"], 1);
        assert_eq!(r.singleton_labels, ["L2"]);
        assert!(r.duplicate_texts.is_empty());

        let kb = kb_from(&[("a", "L1"), ("b", "L1")]);
        assert!(validate_kb(&kb).singleton_labels.is_empty());
    }

    #[test]
    fn validation_flags_cross_label_duplicates() {
        let kb = KnowledgeBase::new(
            vec![
                LabeledQuery::new("a", "where is my parcel", "track"),
                LabeledQuery::new("b", "where is my parcel", "delay"),
                LabeledQuery::new("c", "refund", "refund"),
            ],
            "en",
        )
        .unwrap();
        let r = validate_kb(&kb);
        assert_eq!(r.duplicate_texts.len(), 1);
        assert!(r.duplicate_texts[0].cross_label);
        assert_eq!(r.duplicate_texts[0].ids, ["a", "b"]);
    }

    #[test]
    fn stratified_pair_goes_one_per_side() {
        let kb = kb_from(&[("a", "L"), ("b", "L")]);
        let s = split_kb(&kb, 0.5, 3, true).unwrap();
        assert_eq!(s.index_set.len(), 1);
        assert_eq!(s.training_set.len(), 1);
    }

    #[test]
    fn large_kb_index_size() {
        let entries = (0..35_000)
            .map(|i| LabeledQuery::new(format!("q{i}"), "t", format!("L{}", i % 700)))
            .collect();
        let kb = KnowledgeBase::new(entries, "en").unwrap();
        let s = split_kb(&kb, 0.086, 1, true).unwrap();
        assert_eq!(s.index_set.len(), 3010);
        assert_eq!(s.training_set.len(), 35_000 - 3010);
        let s = split_kb(&kb, 0.086, 1, false).unwrap();
        assert_eq!(s.index_set.len(), 3010);
    }

    #[test]
    fn singletons_go_to_index() {
        let kb = kb_from(&[("a", "A"), ("b", "B"), ("c", "B"), ("d", "B"), ("e", "C"), ("f", "C")]);
        let s = split_kb(&kb, 0.5, 9, true).unwrap();
        assert!(s.index_set.iter().any(|e| e.id == "a"));
        assert_eq!(s.singleton_labels, ["A"]);
    }

    #[test]
    fn split_errors() {
        let kb = kb_from(&[("a", "A"), ("b", "A")]);
        assert!(split_kb(&kb, 0.0, 1, true).is_err());
        assert!(split_kb(&kb, 1.0, 1, true).is_err());
        assert!(split_kb(&kb, 0.1, 1, true).is_err());
    }

    #[test]
    fn save_and_reload_split() {
        let kb = kb_from(&[("a", "A"), ("b", "A"), ("c", "B"), ("d", "B")]);
        let s = split_kb(&kb, 0.5, 5, true).unwrap();
        let dir = tempfile::tempdir().unwrap();
        s.save(dir.path(), &s.manifest(5, 0.5, true)).unwrap();
        let back = KnowledgeBaseSplit::load(dir.path(), "en").unwrap();
        assert_eq!(back.index_set, s.index_set);
        assert_eq!(back.training_set, s.training_set);
        let m: SplitManifest =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("split.json")).unwrap())
                .unwrap();
        assert_eq!(m.index_ids.len(), 2);
    }

    fn arb_kb() -> impl Strategy<Value = KnowledgeBase> {
        prop::collection::vec(0u8..6, 4..60).prop_map(|labels| {
            let entries = labels
                .iter()
                .enumerate()
                .map(|(i, l)| LabeledQuery::new(format!("id{i}"), format!("t{i}"), format!("L{l}")))
                .collect();
            KnowledgeBase::new(entries, "en").unwrap()
        })
    }

    fn has_repeated_label(kb: &KnowledgeBase) -> bool {
        validate_kb(kb).label_histogram.values().any(|&n| n >= 2)
    }

    proptest! {
        #[test]
        fn split_is_disjoint_cover(kb in arb_kb(), frac in 0.2f64..0.8, seed: u64, strat: bool) {
            // All-singleton knowledge bases cannot be stratified with a non-empty training side.
            prop_assume!(!strat || has_repeated_label(&kb));
            let s = split_kb(&kb, frac, seed, strat).unwrap();
            let idx: HashSet<_> = s.index_set.iter().map(|e| &e.id).collect();
            prop_assert!(s.training_set.iter().all(|e| !idx.contains(&e.id)));
            prop_assert_eq!(s.index_set.len() + s.training_set.len(), kb.len());
            let target = (frac * kb.len() as f64).round() as usize;
            if !strat {
                prop_assert_eq!(s.index_set.len(), target);
            }
            let again = split_kb(&kb, frac, seed, strat).unwrap();
            prop_assert_eq!(again, s);
        }

        #[test]
        fn stratified_covers_both_sides(kb in arb_kb(), frac in 0.2f64..0.8, seed: u64) {
            prop_assume!(has_repeated_label(&kb));
            let s = split_kb(&kb, frac, seed, true).unwrap();
            let hist = validate_kb(&kb).label_histogram;
            for (label, n) in hist {
                let in_idx = s.index_set.iter().filter(|e| e.label == label).count();
                let in_train = s.training_set.iter().filter(|e| e.label == label).count();
                if n >= 2 {
                    prop_assert!(in_idx >= 1 && in_train >= 1);
                } else {
                    prop_assert_eq!(in_idx, 1);
                }
            }
        }

        #[test]
        fn kb_roundtrip(kb in arb_kb()) {
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("kb.jsonl");
            save_kb(&kb, &p).unwrap();
            prop_assert_eq!(load_kb(&p, "en").unwrap(), kb);
        }
    }
}
