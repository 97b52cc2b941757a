//! Mini-batch training of the linear adapter on mined pair groups.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::adapter::{loss_gradient, AdapterModel, PairGroup};
use crate::embed::EmbeddingProvider;
use crate::error::{Error, Result};
use crate::pairs::{ContrastivePair, Polarity};
use crate::retrieval::{build_index, evaluate, EvalQuery, EvalReport, Relevance};
use crate::kb::LabeledQuery;
use crate::embed::EmbeddingVector;
use crate::rng::substream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    SgdMomentum,
    AdamwLite,
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OptimizerKind::SgdMomentum => "sgd_momentum",
            OptimizerKind::AdamwLite => "adamw_lite",
        })
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd_momentum" => Ok(OptimizerKind::SgdMomentum),
            "adamw_lite" => Ok(OptimizerKind::AdamwLite),
            _ => Err(Error::invalid(format!("unknown optimizer {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Groups per batch.
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Share of total steps spent in linear warmup.
    pub warmup_fraction: f64,
    pub temperature: f64,
    pub optimizer: OptimizerKind,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Output dimension; defaults to the input dimension (identity init).
    pub d_out: Option<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 15,
            batch_size: 32,
            learning_rate: 2e-5,
            warmup_fraction: 0.1,
            temperature: 0.05,
            optimizer: OptimizerKind::SgdMomentum,
            momentum: 0.9,
            weight_decay: 0.01,
            d_out: None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return Err(Error::invalid("warmup fraction must be in [0, 1)"));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::invalid("temperature must be positive"));
        }
        if self.d_out == Some(0) {
            return Err(Error::invalid("output dimension must be positive"));
        }
        Ok(())
    }
}

/// Rebuilds 1-positive / m-negative groups from pair records (first
/// appearance order) and looks up their frozen vectors. Anchors are
/// embedded with `anchors`, candidates with `candidates`.
pub fn build_groups(
    pairs: &[ContrastivePair],
    anchors: &EmbeddingProvider,
    candidates: &EmbeddingProvider,
) -> Result<GroupSet> {
    let mut order: Vec<&str> = Vec::new();
    let mut by_group: HashMap<&str, Vec<&ContrastivePair>> = HashMap::new();
    for p in pairs {
        by_group
            .entry(p.group_id.as_str())
            .or_insert_with(|| {
                order.push(p.group_id.as_str());
                Vec::new()
            })
            .push(p);
    }
    let mut groups = Vec::with_capacity(order.len());
    let mut dropped = Vec::new();
    for gid in order {
        let members = &by_group[gid];
        let positives: Vec<_> = members.iter().filter(|p| p.polarity == Polarity::Positive).collect();
        match positives.len() {
            0 => return Err(Error::GroupWithoutPositive(gid.to_string())),
            1 => {}
            n => return Err(Error::invalid(format!("group {gid:?} has {n} positives"))),
        }
        let negatives: Vec<_> = members.iter().filter(|p| p.polarity == Polarity::Negative).collect();
        if negatives.is_empty() {
            dropped.push(gid.to_string());
            continue;
        }
        let first = members[0];
        let anchor = anchors.embed_text(&first.anchor_id, &first.anchor_text)?;
        let embed = |p: &ContrastivePair| -> Result<Vec<f64>> {
            Ok(candidates.embed_text(&p.candidate_id, &p.candidate_text)?.values)
        };
        groups.push(PairGroup {
            anchor: anchor.values,
            positive: embed(positives[0])?,
            negatives: negatives.iter().map(|p| embed(p)).collect::<Result<_>>()?,
        });
    }
    if groups.is_empty() {
        return Err(Error::Empty("training group set"));
    }
    Ok(GroupSet { groups, dropped })
}

#[derive(Debug, Clone)]
pub struct GroupSet {
    pub groups: Vec<PairGroup>,
    /// Groups skipped because they had no negatives.
    pub dropped: Vec<String>,
}

/// Held-out retrieval set for per-epoch metrics.
#[derive(Debug, Clone)]
pub struct EvalSet {
    pub index: Vec<(LabeledQuery, EmbeddingVector)>,
    pub queries: Vec<EvalQuery>,
    pub ks: Vec<usize>,
}

impl EvalSet {
    pub fn evaluate(&self, adapter: Option<&AdapterModel>) -> Result<EvalReport> {
        let index = build_index(&self.index, adapter)?;
        Ok(evaluate(&index, &self.queries, &self.ks, adapter, Relevance::Label)?.report)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_loss: f64,
    pub metrics: Option<EvalReport>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub adapter: AdapterModel,
    pub epochs: Vec<EpochLog>,
}

enum OptimizerState {
    Sgd { velocity: Vec<f64> },
    Adam { m: Vec<f64>, v: Vec<f64>, t: i32 },
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl OptimizerState {
    fn new(kind: OptimizerKind, n: usize) -> Self {
        match kind {
            OptimizerKind::SgdMomentum => OptimizerState::Sgd { velocity: vec![0.0; n] },
            OptimizerKind::AdamwLite => OptimizerState::Adam {
                m: vec![0.0; n],
                v: vec![0.0; n],
                t: 0,
            },
        }
    }

    fn step(&mut self, cfg: &TrainConfig, lr: f64, w: &mut [f64], grad: &[f64]) {
        match self {
            OptimizerState::Sgd { velocity } => {
                for ((wi, vi), gi) in w.iter_mut().zip(velocity.iter_mut()).zip(grad) {
                    *vi = cfg.momentum * *vi + gi;
                    *wi -= lr * *vi;
                }
            }
            OptimizerState::Adam { m, v, t } => {
                *t += 1;
                let bc1 = 1.0 - ADAM_BETA1.powi(*t);
                let bc2 = 1.0 - ADAM_BETA2.powi(*t);
                for i in 0..w.len() {
                    m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * grad[i];
                    v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * grad[i] * grad[i];
                    let mhat = m[i] / bc1;
                    let vhat = v[i] / bc2;
                    w[i] -= lr * (mhat / (vhat.sqrt() + ADAM_EPS) + cfg.weight_decay * w[i]);
                }
            }
        }
    }
}

/// Learning rate at 0-based `step`: linear ramp over the warmup steps, then flat.
pub fn lr_at(cfg: &TrainConfig, step: usize, total_steps: usize) -> f64 {
    let warmup = (cfg.warmup_fraction * total_steps as f64).round() as usize;
    if warmup == 0 || step >= warmup {
        cfg.learning_rate
    } else {
        cfg.learning_rate * (step + 1) as f64 / warmup as f64
    }
}

/// Trains an adapter on `groups`. Each epoch visits every group once in a
/// seeded shuffle; the last partial batch is kept. With an eval set,
/// retrieval metrics are recorded after every epoch.
pub fn train(groups: &[PairGroup], cfg: &TrainConfig, eval: Option<&EvalSet>) -> Result<TrainOutcome> {
    cfg.validate()?;
    let first = groups.first().ok_or(Error::Empty("training group set"))?;
    let d_in = first.anchor.len();
    let d_out = cfg.d_out.unwrap_or(d_in);
    let mut adapter = AdapterModel::init(d_in, d_out, cfg.temperature, cfg.seed);

    let batches_per_epoch = groups.len().div_ceil(cfg.batch_size);
    let total_steps = batches_per_epoch * cfg.epochs;
    let mut opt = OptimizerState::new(cfg.optimizer, adapter.weights.len());
    let mut order: Vec<usize> = (0..groups.len()).collect();
    let mut step = 0;
    let mut epochs = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        order.sort_unstable();
        order.shuffle(&mut substream(cfg.seed, "train", &epoch.to_string()));
        let mut loss_sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&PairGroup> = chunk.iter().map(|&i| &groups[i]).collect();
            let (loss, grad) = loss_gradient(&adapter, &batch)?;
            loss_sum += loss * batch.len() as f64;
            let lr = lr_at(cfg, step, total_steps);
            opt.step(cfg, lr, &mut adapter.weights, &grad);
            step += 1;
        }
        if adapter.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::invalid(format!("training diverged in epoch {epoch}")));
        }
        let metrics = eval.map(|e| e.evaluate(Some(&adapter))).transpose()?;
        epochs.push(EpochLog {
            epoch,
            mean_loss: loss_sum / groups.len() as f64,
            metrics,
        });
    }
    Ok(TrainOutcome { adapter, epochs })
}

pub const EPOCH_CSV_HEADER: &str = "epoch,mean_loss,recall@1,recall@3,recall@5,recall@10,mrr";

/// Epoch log as CSV; metric columns are empty without an eval set.
pub fn write_epoch_csv(path: &Path, epochs: &[EpochLog]) -> Result<()> {
    let io = |e| Error::io(path, e);
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    writeln!(f, "{EPOCH_CSV_HEADER}").map_err(io)?;
    for e in epochs {
        let mut row = format!("{},{}", e.epoch, e.mean_loss);
        match &e.metrics {
            Some(m) => {
                for k in [1, 3, 5, 10] {
                    row.push(',');
                    if let Some(r) = m.recall_at(k) {
                        row.push_str(&r.to_string());
                    }
                }
                row.push_str(&format!(",{}", m.mrr));
            }
            None => row.push_str(",,,,,"),
        }
        writeln!(f, "{row}").map_err(io)?;
    }
    f.flush().map_err(io)
}

/// One parsed row of the epoch CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRow {
    pub epoch: usize,
    pub mean_loss: f64,
    /// recall@1, @3, @5, @10, mrr; `None` where the column is empty.
    pub metrics: [Option<f64>; 5],
}

pub fn read_epoch_csv(path: &Path) -> Result<Vec<EpochRow>> {
    let body = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = body.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == EPOCH_CSV_HEADER => {}
        _ => {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: 1,
                message: format!("expected header {EPOCH_CSV_HEADER:?}"),
            })
        }
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |m: &str| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: m.to_string(),
        };
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 7 {
            return Err(bad("expected 7 columns"));
        }
        let num = |s: &str| -> Result<Option<f64>> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|_| bad("bad number"))
            }
        };
        let mut metrics = [None; 5];
        for (m, c) in metrics.iter_mut().zip(&cols[2..]) {
            *m = num(c)?;
        }
        rows.push(EpochRow {
            epoch: cols[0].parse().map_err(|_| bad("bad epoch"))?,
            mean_loss: num(cols[1])?.ok_or_else(|| bad("missing loss"))?,
            metrics,
        });
    }
    Ok(rows)
}
