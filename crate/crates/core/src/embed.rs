//! Embedding providers: a hashed character/word n-gram embedder that needs
//! no model files, and tables of precomputed vectors loaded from disk.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jsonl;

/// A unit-norm vector attached to a text id.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    pub id: String,
    pub values: Vec<f64>,
}

impl EmbeddingVector {
    /// Normalizes `raw` to unit length. Zero or non-finite input is rejected.
    pub fn normalized(id: impl Into<String>, raw: Vec<f64>) -> Result<Self> {
        let id = id.into();
        if raw.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite embedding for {id:?}")));
        }
        let values = normalize(raw).ok_or_else(|| Error::ZeroVector(id.clone()))?;
        Ok(EmbeddingVector { id, values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

pub fn normalize(mut v: Vec<f64>) -> Option<Vec<f64>> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return None;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    Some(v)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Feature-hashing embedder over lowercase word tokens and character trigrams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HashedNgram {
    pub dim: usize,
    pub seed: u64,
}

impl HashedNgram {
    pub fn new(dim: usize, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("embedding dimension must be positive"));
        }
        Ok(HashedNgram { dim, seed })
    }

    pub fn embed(&self, id: &str, text: &str) -> Result<EmbeddingVector> {
        if text.trim().is_empty() {
            return Err(Error::Empty("text"));
        }
        let mut acc = vec![0.0f64; self.dim];
        for feat in ngram_features(text) {
            let h = feature_hash(self.seed, &feat);
            let bucket = (h % self.dim as u64) as usize;
            let sign = if (h >> 40) & 1 == 0 { 1.0 } else { -1.0 };
            acc[bucket] += sign;
        }
        EmbeddingVector::normalized(id, acc)
    }
}

/// Word tokens (`w:` prefix) and character trigrams (`c:` prefix) of the
/// lowercased, whitespace-collapsed text. Texts shorter than three
/// characters contribute themselves as a single character feature.
pub fn ngram_features(text: &str) -> Vec<String> {
    let lowered = text.to_lowercase();
    let collapsed = lowered.split_whitespace().collect::<Vec<_>>().join(" ");
    let mut feats: Vec<String> = collapsed
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(|w| format!("w:{w}"))
        .collect();
    let chars: Vec<char> = collapsed.chars().collect();
    if chars.len() < 3 {
        if !chars.is_empty() {
            feats.push(format!("c:{collapsed}"));
        }
    } else {
        feats.extend(chars.windows(3).map(|w| format!("c:{}", w.iter().collect::<String>())));
    }
    feats
}

// FNV-1a over the seed and feature bytes, finished with the splitmix64 mixer.
fn feature_hash(seed: u64, feat: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in seed.to_le_bytes().iter().chain(feat.as_bytes()) {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h = (h ^ (h >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h = (h ^ (h >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    h ^ (h >> 31)
}

/// Precomputed vectors keyed by text id, stored as 32-bit floats.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EmbeddingTable {
    dim: usize,
    ids: Vec<String>,
    data: Vec<f32>,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct EmbeddingRecord {
    id: String,
    vector: Vec<f32>,
}

const BINARY_MAGIC: &[u8; 4] = b"EMB1";

impl EmbeddingTable {
    pub fn new(dim: usize) -> Self {
        EmbeddingTable {
            dim,
            ..Default::default()
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn push(&mut self, id: impl Into<String>, values: &[f32]) -> Result<()> {
        let id = id.into();
        if self.ids.is_empty() && self.dim == 0 {
            self.dim = values.len();
        }
        if values.len() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                actual: values.len(),
            });
        }
        if self.index.contains_key(&id) {
            return Err(Error::DuplicateId(id));
        }
        self.index.insert(id.clone(), self.ids.len());
        self.ids.push(id);
        self.data.extend_from_slice(values);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&[f32]> {
        self.index
            .get(id)
            .map(|&i| &self.data[i * self.dim..(i + 1) * self.dim])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f32])> {
        self.ids
            .iter()
            .enumerate()
            .map(move |(i, id)| (id.as_str(), &self.data[i * self.dim..(i + 1) * self.dim]))
    }

    /// Unit-normalized lookup.
    pub fn embed(&self, id: &str) -> Result<EmbeddingVector> {
        let raw = self.get(id).ok_or_else(|| Error::UnknownId(id.to_string()))?;
        EmbeddingVector::normalized(id, raw.iter().map(|&v| f64::from(v)).collect())
    }

    pub fn save_jsonl(&self, path: &Path) -> Result<()> {
        let records: Vec<EmbeddingRecord> = self
            .iter()
            .map(|(id, v)| EmbeddingRecord {
                id: id.to_string(),
                vector: v.to_vec(),
            })
            .collect();
        jsonl::write(path, &records)
    }

    pub fn load_jsonl(path: &Path) -> Result<Self> {
        let rows: Vec<(usize, EmbeddingRecord)> = jsonl::read(path)?;
        let mut table = EmbeddingTable::new(0);
        for (line, rec) in rows {
            table.push(rec.id, &rec.vector).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line,
                message: e.to_string(),
            })?;
        }
        Ok(table)
    }

    /// `EMB1`, u32 count, u32 dim, count*dim f32, then u32-length-prefixed
    /// UTF-8 ids. All integers and floats little-endian.
    pub fn save_binary(&self, path: &Path) -> Result<()> {
        let io = |e| Error::io(path, e);
        let mut w = BufWriter::new(File::create(path).map_err(io)?);
        w.write_all(BINARY_MAGIC).map_err(io)?;
        w.write_all(&(self.len() as u32).to_le_bytes()).map_err(io)?;
        w.write_all(&(self.dim as u32).to_le_bytes()).map_err(io)?;
        for v in &self.data {
            w.write_all(&v.to_le_bytes()).map_err(io)?;
        }
        for id in &self.ids {
            w.write_all(&(id.len() as u32).to_le_bytes()).map_err(io)?;
            w.write_all(id.as_bytes()).map_err(io)?;
        }
        w.flush().map_err(io)
    }

    pub fn load_binary(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        File::open(path)
            .and_then(|f| BufReader::new(f).read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        let bad = |msg: &str| Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: msg.to_string(),
        };
        let mut cur = ByteCursor { buf: &bytes, pos: 0 };
        if cur.take(4).ok_or_else(|| bad("truncated header"))? != BINARY_MAGIC {
            return Err(bad("bad magic, expected EMB1"));
        }
        let count = cur.u32().ok_or_else(|| bad("truncated header"))? as usize;
        let dim = cur.u32().ok_or_else(|| bad("truncated header"))? as usize;
        let mut data = Vec::with_capacity(count * dim);
        for _ in 0..count * dim {
            let b = cur.take(4).ok_or_else(|| bad("truncated vector data"))?;
            data.push(f32::from_le_bytes([b[0], b[1], b[2], b[3]]));
        }
        let mut table = EmbeddingTable::new(dim);
        for i in 0..count {
            let len = cur.u32().ok_or_else(|| bad("truncated id block"))? as usize;
            let raw = cur.take(len).ok_or_else(|| bad("truncated id block"))?;
            let id = std::str::from_utf8(raw).map_err(|_| bad("id is not UTF-8"))?;
            table.push(id, &data[i * dim..(i + 1) * dim])?;
        }
        if cur.pos != bytes.len() {
            return Err(bad("trailing bytes after id block"));
        }
        Ok(table)
    }

    /// Loads either format, sniffing the binary magic.
    pub fn load(path: &Path) -> Result<Self> {
        let mut head = [0u8; 4];
        let n = File::open(path)
            .and_then(|mut f| f.read(&mut head))
            .map_err(|e| Error::io(path, e))?;
        if n == 4 && &head == BINARY_MAGIC {
            Self::load_binary(path)
        } else {
            Self::load_jsonl(path)
        }
    }

    /// Saves as binary when the extension is `.bin` or `.emb`, JSONL otherwise.
    pub fn save(&self, path: &Path) -> Result<()> {
        match path.extension().and_then(|e| e.to_str()) {
            Some("bin") | Some("emb") => self.save_binary(path),
            _ => self.save_jsonl(path),
        }
    }
}

struct ByteCursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> ByteCursor<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        let s = self.buf.get(self.pos..end)?;
        self.pos = end;
        Some(s)
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

/// Where vectors come from: hashed from text, or looked up by id.
#[derive(Debug, Clone)]
pub enum EmbeddingProvider {
    HashedNgram(HashedNgram),
    File(EmbeddingTable),
}

impl EmbeddingProvider {
    pub fn dim(&self) -> usize {
        match self {
            EmbeddingProvider::HashedNgram(h) => h.dim,
            EmbeddingProvider::File(t) => t.dim(),
        }
    }

    pub fn embed_text(&self, id: &str, text: &str) -> Result<EmbeddingVector> {
        match self {
            EmbeddingProvider::HashedNgram(h) => h.embed(id, text),
            EmbeddingProvider::File(t) => {
                if text.trim().is_empty() {
                    return Err(Error::Empty("text"));
                }
                t.embed(id)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn hashed_is_deterministic_and_unit() {
        let h = HashedNgram::new(64, 3).unwrap();
        let a = h.embed("x", "cancel my order").unwrap();
        let b = h.embed("x", "cancel my order").unwrap();
        assert_eq!(a, b);
        assert!((dot(&a.values, &a.values) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn seed_changes_vector() {
        let a = HashedNgram::new(32, 1).unwrap().embed("x", "abc").unwrap();
        let b = HashedNgram::new(32, 2).unwrap().embed("x", "abc").unwrap();
        // "abc" yields features {w:abc, c:abc}; recompute their buckets under each seed.
        let buckets = |seed| {
            ["w:abc", "c:abc"]
                .map(|f| (feature_hash(seed, f) % 32, (feature_hash(seed, f) >> 40) & 1))
        };
        assert_ne!(buckets(1), buckets(2));
        assert_ne!(a.values, b.values);
    }

    #[test]
    fn features_cover_words_and_trigrams() {
        let f = ngram_features("Ab  cd");
        assert_eq!(f, ["w:ab", "w:cd", "c:ab ", "c:b c", "c: cd"]);
        assert_eq!(ngram_features("hi"), ["w:hi", "c:hi"]);
    }

    #[test]
    fn empty_text_rejected() {
        let h = HashedNgram::new(8, 0).unwrap();
        assert!(matches!(h.embed("x", "  "), Err(Error::Empty(_))));
    }

    #[test]
    fn zero_vector_is_error() {
        assert!(matches!(
            EmbeddingVector::normalized("z", vec![0.0; 4]),
            Err(Error::ZeroVector(_))
        ));
    }

    fn random_table(n: usize, dim: usize, seed: u64) -> EmbeddingTable {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut t = EmbeddingTable::new(dim);
        for i in 0..n {
            let v: Vec<f32> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            t.push(format!("id-{i}"), &v).unwrap();
        }
        t
    }

    #[test]
    fn jsonl_and_binary_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let t = random_table(100, 16, 4);
        let pj = dir.path().join("t.jsonl");
        let pb = dir.path().join("t.bin");
        t.save(&pj).unwrap();
        t.save(&pb).unwrap();
        assert_eq!(EmbeddingTable::load(&pj).unwrap(), t);
        assert_eq!(EmbeddingTable::load(&pb).unwrap(), t);
    }

    #[test]
    fn empty_table_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let t = EmbeddingTable::new(0);
        let pj = dir.path().join("e.jsonl");
        let pb = dir.path().join("e.bin");
        t.save(&pj).unwrap();
        t.save(&pb).unwrap();
        assert!(EmbeddingTable::load(&pj).unwrap().is_empty());
        assert!(EmbeddingTable::load(&pb).unwrap().is_empty());
    }

    #[test]
    fn binary_layout_is_exact() {
        let mut t = EmbeddingTable::new(2);
        t.push("ab", &[1.0, -2.0]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.bin");
        t.save_binary(&p).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        let mut expect = b"EMB1".to_vec();
        expect.extend(1u32.to_le_bytes());
        expect.extend(2u32.to_le_bytes());
        expect.extend(1.0f32.to_le_bytes());
        expect.extend((-2.0f32).to_le_bytes());
        expect.extend(2u32.to_le_bytes());
        expect.extend(b"ab");
        assert_eq!(bytes, expect);
    }

    #[test]
    fn short_record_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.jsonl");
        let full: Vec<f32> = vec![0.5; 32];
        let short: Vec<f32> = vec![0.5; 31];
        let body = format!(
            "{}\n{}\n",
            serde_json::json!({"id": "a", "vector": full}),
            serde_json::json!({"id": "b", "vector": short})
        );
        std::fs::write(&p, body).unwrap();
        match EmbeddingTable::load(&p).unwrap_err() {
            Error::Parse { line, message, .. } => {
                assert_eq!(line, 2);
                assert!(message.contains("dimension"), "{message}");
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn file_provider_unknown_id() {
        let p = EmbeddingProvider::File(random_table(3, 4, 1));
        assert!(matches!(p.embed_text("nope", "x"), Err(Error::UnknownId(_))));
        let v = p.embed_text("id-1", "x").unwrap();
        assert!((dot(&v.values, &v.values) - 1.0).abs() < 1e-6);
    }

    fn word() -> impl Strategy<Value = String> {
        "[a-z]{4,8}"
    }

    proptest! {
        #[test]
        fn shared_trigrams_raise_cosine(words in prop::collection::vec(word(), 6)) {
            // A text and a one-word edit of it share most trigrams; a text built
            // from disjoint letters shares none. Averaged over seeds the former
            // must be more similar.
            let base = words[..4].join(" ");
            let edited = format!("{} {}", words[..3].join(" "), words[4]);
            let other: String = base.chars().map(|c| if c == ' ' { ' ' } else { '9' }).collect();
            let mut near = 0.0;
            let mut far = 0.0;
            for seed in 0..8 {
                let h = HashedNgram::new(256, seed).unwrap();
                let a = h.embed("a", &base).unwrap();
                near += dot(&a.values, &h.embed("b", &edited).unwrap().values);
                far += dot(&a.values, &h.embed("c", &other).unwrap().values);
            }
            prop_assert!(near > far, "near {near} far {far}");
        }
    }
}
