mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use kbalign::miner::Strategy;
use kbalign::retrieval::Relevance;
use kbalign::train::OptimizerKind;

use crate::config::{positive_k, FileConfig};

#[derive(Parser, Debug)]
#[command(name = "kbalign", version, about = "Cross-lingual query retrieval: mining, adapter training and evaluation")]
pub struct Cli {
    /// JSON config file; keys are flag names with underscores. Flags win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Rerun even if the output manifest says the artifacts are up to date.
    #[arg(long, global = true)]
    pub force: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Split a labeled knowledge base into index and training sets.
    Split(SplitArgs),
    /// Translate training anchors and mine positive/negative pairs.
    Mine(MineArgs),
    /// Generate synthetic groups for unlabeled target-language queries.
    Augment(AugmentArgs),
    /// Train a linear adapter on pair files.
    Train(TrainArgs),
    /// Evaluate retrieval, or turn a training epoch log into a curve.
    Eval(EvalArgs),
    /// Write the seeded synthetic benchmark.
    Bench(BenchArgs),
    /// Compare negative-sampling strategies on the synthetic benchmark.
    Ablate(AblateArgs),
}

fn strategy(s: &str) -> Result<Strategy, String> {
    s.parse().map_err(|e: kbalign::Error| e.to_string())
}

fn optimizer(s: &str) -> Result<OptimizerKind, String> {
    s.parse().map_err(|e: kbalign::Error| e.to_string())
}

fn relevance(s: &str) -> Result<Relevance, String> {
    match s {
        "label" => Ok(Relevance::Label),
        "id" => Ok(Relevance::Id),
        _ => Err(format!("unknown relevance {s:?} (expected label or id)")),
    }
}

#[derive(Args, Debug)]
pub struct SplitArgs {
    /// Knowledge base JSONL ({"id","text","label"} per line).
    #[arg(long)]
    pub kb: Option<PathBuf>,
    #[arg(long)]
    pub index_frac: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Plain shuffle instead of per-label stratification.
    #[arg(long)]
    pub no_stratify: bool,
    #[arg(long)]
    pub lang: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct ProviderArgs {
    /// Generation backend: stub or http. Backend details come from the
    /// config file's "provider" object.
    #[arg(long)]
    pub provider: Option<String>,
}

#[derive(Args, Debug)]
pub struct MineArgs {
    /// Directory written by `split`.
    #[arg(long)]
    pub split: Option<PathBuf>,
    #[arg(long, value_parser = strategy)]
    pub strategy: Option<Strategy>,
    /// Hard negatives per group (hybrid: 2, hard_only/hardest_only: 3, random_only: 0).
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Target language passed to the translation backend.
    #[arg(long)]
    pub lang: Option<String>,
    /// Precomputed translations ({"id","text"} JSONL) instead of calling a backend.
    #[arg(long)]
    pub translations: Option<PathBuf>,
    /// Precomputed label-similarity matrix JSON; lexical scoring otherwise.
    #[arg(long)]
    pub label_sim: Option<PathBuf>,
    #[command(flatten)]
    pub provider: ProviderArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct AugmentArgs {
    /// Unlabeled target-language queries ({"id","text"} JSONL).
    #[arg(long)]
    pub queries: Option<PathBuf>,
    #[arg(long)]
    pub lang: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub provider: ProviderArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct EmbedArgs {
    /// Source-language vectors keyed by knowledge-base id (JSONL or EMB1).
    #[arg(long)]
    pub kb_emb: Option<PathBuf>,
    /// Target-language vectors keyed by query id (JSONL or EMB1).
    #[arg(long)]
    pub query_emb: Option<PathBuf>,
    /// Dimension of the hashed n-gram embedder used where no table is given.
    #[arg(long)]
    pub hashed_dim: Option<usize>,
    #[arg(long)]
    pub hashed_seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Pair files (mined and/or synthetic); repeat or comma-separate.
    #[arg(long, value_delimiter = ',')]
    pub pairs: Vec<PathBuf>,
    #[command(flatten)]
    pub embed: EmbedArgs,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub temp: Option<f64>,
    #[arg(long, value_parser = optimizer)]
    pub optimizer: Option<OptimizerKind>,
    #[arg(long)]
    pub warmup: Option<f64>,
    #[arg(long)]
    pub d_out: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Index-set JSONL for per-epoch retrieval metrics.
    #[arg(long)]
    pub eval_index: Option<PathBuf>,
    /// Labeled target-language queries for per-epoch metrics.
    #[arg(long)]
    pub eval_queries: Option<PathBuf>,
    /// Cutoffs for recall@k, e.g. 1,3,5,10; MRR is cut at the largest.
    #[arg(long, value_delimiter = ',', value_parser = positive_k)]
    pub ks: Vec<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Index-set JSONL (retrieval corpus).
    #[arg(long)]
    pub index: Option<PathBuf>,
    /// Labeled target-language queries. Under `--relevance id` the label
    /// field holds the relevant knowledge-base id.
    #[arg(long)]
    pub queries: Option<PathBuf>,
    /// Adapter JSON from `train`; none means frozen embeddings.
    #[arg(long)]
    pub adapter: Option<PathBuf>,
    #[command(flatten)]
    pub embed: EmbedArgs,
    /// Cutoffs for recall@k, e.g. 1,3,5,10; MRR is cut at the largest.
    #[arg(long, value_delimiter = ',', value_parser = positive_k)]
    pub ks: Vec<usize>,
    #[arg(long, value_parser = relevance)]
    pub relevance: Option<Relevance>,
    /// Epoch log (epochs.csv) from `train`; writes curve.csv.
    #[arg(long)]
    pub per_epoch: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub labels: Option<usize>,
    #[arg(long)]
    pub per_label: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct AblateArgs {
    /// Benchmark spec JSON (bench.json from `bench`); defaults otherwise.
    #[arg(long)]
    pub bench_spec: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', value_parser = strategy)]
    pub strategies: Vec<Strategy>,
    /// Number of seeds per strategy.
    #[arg(long)]
    pub seeds: Option<usize>,
    /// First seed; the others follow consecutively.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub index_frac: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub temp: Option<f64>,
    #[arg(long, value_parser = optimizer)]
    pub optimizer: Option<OptimizerKind>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = FileConfig::load(cli.config.as_deref()).and_then(|cfg| commands::run(&cli, &cfg));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("kbalign: {e}");
            if e.exit_code() == 1 {
                eprintln!("Try 'kbalign --help' for more information.");
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
