//! Text generation for query translation and synthetic pair augmentation.
//!
//! Two backends share one contract: an HTTP backend that posts prompts to a
//! chat-completion style endpoint, and a stub whose outputs are fixed,
//! seeded transformations of the input so the whole pipeline can run
//! without a network.

use std::collections::HashSet;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::kb::UnlabeledQuerySet;
use crate::pairs::{ContrastivePair, PairSource, Polarity};
use crate::rng::substream;

pub const NEGATIVES_PER_GROUP: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GenError {
    #[error("empty input text")]
    EmptyInput,
    #[error("transport error talking to {endpoint}: {message}")]
    Transport { endpoint: String, message: String },
    #[error("{endpoint} answered HTTP {status}: {body}")]
    Status {
        endpoint: String,
        status: u16,
        body: String,
    },
    #[error("empty completion from {endpoint}")]
    EmptyCompletion { endpoint: String },
    #[error("completion does not match the group schema: {0}")]
    Parse(String),
    #[error("distractor pool has {0} usable texts, need {NEGATIVES_PER_GROUP}")]
    InsufficientDistractors(usize),
    #[error("auth token environment variable {0} is not set")]
    MissingToken(String),
}

impl GenError {
    /// Transport-level failures, as opposed to bad data.
    pub fn is_transport(&self) -> bool {
        matches!(
            self,
            GenError::Transport { .. } | GenError::Status { .. } | GenError::EmptyCompletion { .. } | GenError::MissingToken(_)
        )
    }
}

/// One synthetic group: the query, a paraphrase and three unrelated texts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentedGroup {
    pub anchor_text: String,
    pub positive_text: String,
    pub negative_texts: Vec<String>,
}

impl AugmentedGroup {
    fn validate(self) -> Result<Self, GenError> {
        if self.positive_text.trim().is_empty() {
            return Err(GenError::Parse("empty positive".into()));
        }
        if self.negative_texts.len() != NEGATIVES_PER_GROUP {
            return Err(GenError::Parse(format!(
                "expected {NEGATIVES_PER_GROUP} negatives, got {}",
                self.negative_texts.len()
            )));
        }
        let mut seen = HashSet::new();
        for n in &self.negative_texts {
            if n.trim().is_empty() {
                return Err(GenError::Parse("empty negative".into()));
            }
            if n == &self.anchor_text {
                return Err(GenError::Parse("negative repeats the query".into()));
            }
            if !seen.insert(n.as_str()) {
                return Err(GenError::Parse(format!("duplicate negative {n:?}")));
            }
        }
        Ok(self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PromptTemplates {
    /// Placeholders: `{text}`, `{lang}`.
    pub translate: String,
    /// Placeholders: `{query}`.
    pub synthesize: String,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        PromptTemplates {
            translate: "Translate the following customer query into {lang}. \
                        Reply with the translation only.\n\n{text}"
                .into(),
            synthesize: "Given the customer query below, write one query with the same meaning \
                         and three queries with clearly different meanings. Reply with JSON only, \
                         exactly in the form {\"positive\": \"...\", \"negatives\": [\"...\", \"...\", \"...\"]}.\n\n{query}"
                .into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpConfig {
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the bearer token.
    pub token_env: String,
    pub timeout_s: f64,
    pub max_retries: u32,
    pub parallelism: usize,
    /// First retry delay; doubles on each further attempt.
    pub backoff_ms: u64,
    pub prompts: PromptTemplates,
}

impl Default for HttpConfig {
    fn default() -> Self {
        HttpConfig {
            endpoint: "http://127.0.0.1:8080/v1/complete".into(),
            model: "default".into(),
            token_env: "KBALIGN_API_TOKEN".into(),
            timeout_s: 60.0,
            max_retries: 3,
            parallelism: 4,
            backoff_ms: 1000,
            prompts: PromptTemplates::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StubConfig {
    pub seed: u64,
    pub distractors: Vec<String>,
}

impl Default for StubConfig {
    fn default() -> Self {
        StubConfig {
            seed: 0,
            distractors: [
                "how do I reset my password",
                "what are your opening hours",
                "I want to change my delivery address",
                "my card was charged twice",
                "can I speak to a human agent",
                "the app keeps crashing on login",
                "do you ship internationally",
                "how do I update my phone number",
            ]
            .map(String::from)
            .to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "backend", rename_all = "lowercase")]
pub enum ProviderConfig {
    Stub(StubConfig),
    Http(HttpConfig),
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig::Stub(StubConfig::default())
    }
}

/// Deterministic stand-in backend.
#[derive(Debug, Clone)]
pub struct StubProvider {
    cfg: StubConfig,
}

impl StubProvider {
    pub fn new(cfg: StubConfig) -> Self {
        StubProvider { cfg }
    }

    fn translate(&self, text: &str, lang: &str) -> String {
        format!("[T:{lang}] {text}")
    }

    fn synthesize(&self, query: &str) -> Result<AugmentedGroup, GenError> {
        let mut seen = HashSet::new();
        let pool: Vec<&String> = self
            .cfg
            .distractors
            .iter()
            .filter(|t| !t.trim().is_empty() && t.as_str() != query && seen.insert(t.as_str()))
            .collect();
        if pool.len() < NEGATIVES_PER_GROUP {
            return Err(GenError::InsufficientDistractors(pool.len()));
        }
        let mut rng = substream(self.cfg.seed, "augment", query);
        let negative_texts = sample(&mut rng, pool.len(), NEGATIVES_PER_GROUP)
            .into_iter()
            .map(|i| pool[i].clone())
            .collect();
        Ok(AugmentedGroup {
            anchor_text: query.to_string(),
            positive_text: format!("{query} (paraphrase)"),
            negative_texts,
        })
    }
}

/// Plain-HTTP backend. The bearer token is read from the environment on
/// every request and never stored or printed.
#[derive(Debug, Clone)]
pub struct HttpProvider {
    cfg: HttpConfig,
    client: reqwest::blocking::Client,
}

impl HttpProvider {
    pub fn new(cfg: HttpConfig) -> Result<Self, GenError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(cfg.timeout_s.max(0.001)))
            .build()
            .map_err(|e| GenError::Transport {
                endpoint: cfg.endpoint.clone(),
                message: e.to_string(),
            })?;
        Ok(HttpProvider { cfg, client })
    }

    pub fn config(&self) -> &HttpConfig {
        &self.cfg
    }

    fn complete(&self, prompt: &str) -> Result<String, GenError> {
        let mut last = None;
        for attempt in 0..=self.cfg.max_retries {
            if attempt > 0 {
                let delay = self.cfg.backoff_ms.saturating_mul(1 << (attempt - 1).min(20));
                std::thread::sleep(Duration::from_millis(delay));
            }
            match self.complete_once(prompt) {
                Ok(text) => return Ok(text),
                Err(e @ GenError::MissingToken(_)) => return Err(e),
                Err(GenError::Status { status, endpoint, body })
                    if (400..500).contains(&status) && status != 408 && status != 429 =>
                {
                    return Err(GenError::Status { endpoint, status, body });
                }
                Err(e) => last = Some(e),
            }
        }
        Err(last.expect("at least one attempt"))
    }

    fn complete_once(&self, prompt: &str) -> Result<String, GenError> {
        let endpoint = &self.cfg.endpoint;
        let mut req = self
            .client
            .post(endpoint)
            .json(&serde_json::json!({"model": self.cfg.model, "prompt": prompt}));
        if !self.cfg.token_env.is_empty() {
            let token = std::env::var(&self.cfg.token_env)
                .map_err(|_| GenError::MissingToken(self.cfg.token_env.clone()))?;
            req = req.bearer_auth(token);
        }
        let resp = req.send().map_err(|e| GenError::Transport {
            endpoint: endpoint.clone(),
            message: e.to_string(),
        })?;
        let status = resp.status();
        let body = resp.text().map_err(|e| GenError::Transport {
            endpoint: endpoint.clone(),
            message: e.to_string(),
        })?;
        if !status.is_success() {
            return Err(GenError::Status {
                endpoint: endpoint.clone(),
                status: status.as_u16(),
                body: body.chars().take(200).collect(),
            });
        }
        let text = extract_completion(&body).trim().to_string();
        if text.is_empty() {
            return Err(GenError::EmptyCompletion {
                endpoint: endpoint.clone(),
            });
        }
        Ok(text)
    }
}

/// Pulls the generated text out of common completion response shapes,
/// falling back to the raw body.
pub fn extract_completion(body: &str) -> String {
    let Ok(v) = serde_json::from_str::<Value>(body) else {
        return body.to_string();
    };
    let candidates = [
        v.pointer("/choices/0/message/content"),
        v.pointer("/choices/0/text"),
        v.pointer("/content/0/text"),
        v.get("completion"),
        v.get("text"),
        v.get("output"),
        v.get("response"),
    ];
    for c in candidates.into_iter().flatten() {
        if let Some(s) = c.as_str() {
            return s.to_string();
        }
    }
    match v {
        Value::String(s) => s,
        _ => body.to_string(),
    }
}

#[derive(Deserialize)]
struct GroupSchema {
    positive: String,
    negatives: Vec<String>,
}

/// Parses `{"positive": ..., "negatives": [..3..]}`, tolerating code fences
/// or prose around the object.
pub fn parse_group(query: &str, completion: &str) -> Result<AugmentedGroup, GenError> {
    let start = completion.find('{');
    let end = completion.rfind('}');
    let json = match (start, end) {
        (Some(s), Some(e)) if s < e => &completion[s..=e],
        _ => return Err(GenError::Parse("no JSON object in completion".into())),
    };
    let g: GroupSchema = serde_json::from_str(json).map_err(|e| GenError::Parse(e.to_string()))?;
    AugmentedGroup {
        anchor_text: query.to_string(),
        positive_text: g.positive.trim().to_string(),
        negative_texts: g.negatives.into_iter().map(|n| n.trim().to_string()).collect(),
    }
    .validate()
}

#[derive(Debug, Clone)]
pub enum GenerationProvider {
    Stub(StubProvider),
    Http(HttpProvider),
}

impl GenerationProvider {
    pub fn from_config(cfg: &ProviderConfig) -> Result<Self, GenError> {
        Ok(match cfg {
            ProviderConfig::Stub(s) => GenerationProvider::Stub(StubProvider::new(s.clone())),
            ProviderConfig::Http(h) => GenerationProvider::Http(HttpProvider::new(h.clone())?),
        })
    }

    pub fn stub(seed: u64) -> Self {
        GenerationProvider::Stub(StubProvider::new(StubConfig {
            seed,
            ..Default::default()
        }))
    }

    pub fn parallelism(&self) -> usize {
        match self {
            GenerationProvider::Stub(_) => 1,
            GenerationProvider::Http(h) => h.cfg.parallelism.max(1),
        }
    }

    pub fn translate(&self, text: &str, target_language: &str) -> Result<String, GenError> {
        if text.trim().is_empty() || target_language.trim().is_empty() {
            return Err(GenError::EmptyInput);
        }
        match self {
            GenerationProvider::Stub(s) => Ok(s.translate(text, target_language)),
            GenerationProvider::Http(h) => {
                let prompt = h
                    .cfg
                    .prompts
                    .translate
                    .replace("{lang}", target_language)
                    .replace("{text}", text);
                h.complete(&prompt)
            }
        }
    }

    pub fn synthesize_group(&self, query: &str) -> Result<AugmentedGroup, GenError> {
        if query.trim().is_empty() {
            return Err(GenError::EmptyInput);
        }
        match self {
            GenerationProvider::Stub(s) => s.synthesize(query),
            GenerationProvider::Http(h) => {
                let prompt = h.cfg.prompts.synthesize.replace("{query}", query);
                parse_group(query, &h.complete(&prompt)?)
            }
        }
    }
}

/// Runs `f` over `0..n` with at most `parallelism` calls in flight and
/// returns results in input order.
pub fn run_bounded<T: Send>(n: usize, parallelism: usize, f: impl Fn(usize) -> T + Sync) -> Vec<T> {
    let workers = parallelism.clamp(1, n.max(1));
    if workers == 1 {
        return (0..n).map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<T>>> = Mutex::new((0..n).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let out = f(i);
                slots.lock().expect("worker panicked")[i] = Some(out);
            });
        }
    });
    slots
        .into_inner()
        .expect("worker panicked")
        .into_iter()
        .map(|o| o.expect("every slot filled"))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryFailure {
    pub id: String,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AugmentOutcome {
    pub pairs: Vec<ContrastivePair>,
    pub failures: Vec<QueryFailure>,
}

pub fn synthetic_group_id(query_id: &str) -> String {
    format!("s-{query_id}")
}

/// The four pairs (1 positive, 3 negatives) of one synthetic group.
pub fn group_pairs(query_id: &str, group: &AugmentedGroup) -> Vec<ContrastivePair> {
    let gid = synthetic_group_id(query_id);
    let make = |cid: String, text: &str, polarity, source| ContrastivePair {
        group_id: gid.clone(),
        anchor_id: query_id.to_string(),
        anchor_text: group.anchor_text.clone(),
        candidate_id: cid,
        candidate_text: text.to_string(),
        polarity,
        source,
    };
    let mut out = vec![make(
        format!("{query_id}#pos"),
        &group.positive_text,
        Polarity::Positive,
        PairSource::SyntheticPos,
    )];
    for (i, n) in group.negative_texts.iter().enumerate() {
        out.push(make(
            format!("{query_id}#neg{}", i + 1),
            n,
            Polarity::Negative,
            PairSource::SyntheticNeg,
        ));
    }
    out
}

/// Synthesizes one group per query. Failures are collected, never fatal.
pub fn augment_dataset(provider: &GenerationProvider, queries: &UnlabeledQuerySet) -> AugmentOutcome {
    let qs = queries.queries();
    let results = run_bounded(qs.len(), provider.parallelism(), |i| provider.synthesize_group(&qs[i].text));
    let mut out = AugmentOutcome::default();
    for (q, r) in qs.iter().zip(results) {
        match r {
            Ok(g) => out.pairs.extend(group_pairs(&q.id, &g)),
            Err(e) => out.failures.push(QueryFailure {
                id: q.id.clone(),
                error: e.to_string(),
            }),
        }
    }
    out
}
