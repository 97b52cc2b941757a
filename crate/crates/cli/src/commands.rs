use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use kbalign::ablation::{prepare, run_ablation};
use kbalign::adapter::AdapterModel;
use kbalign::bench::{gen_benchmark, BenchmarkSpec, BENCH_FILES};
use kbalign::embed::{EmbeddingProvider, EmbeddingTable, HashedNgram};
use kbalign::jsonl;
use kbalign::kb::{load_kb, load_queries, split_kb, validate_kb, KnowledgeBaseSplit, LabeledQuery};
use kbalign::label_sim::{similarity_matrix, LabelSimilarityMatrix, SimilarityScorer};
use kbalign::manifest::RunManifest;
use kbalign::miner::{mine_dataset, MiningConfig, Strategy};
use kbalign::pairs::{load_pairs, save_pairs, ContrastivePair};
use kbalign::pipeline::{augment_to_file, build_eval_set, translate_with_cache, ItemError, TranslationRecord};
use kbalign::retrieval::{build_index, evaluate, EvalQuery, Relevance, DEFAULT_KS};
use kbalign::textgen::{GenerationProvider, ProviderConfig};
use kbalign::train::{build_groups, read_epoch_csv, train, write_epoch_csv, OptimizerKind, TrainConfig};

use crate::config::{CliError, CliResult, FileConfig};
use crate::{AblateArgs, AugmentArgs, BenchArgs, Cli, Command, EmbedArgs, EvalArgs, MineArgs, SplitArgs, TrainArgs};

const MANIFEST: &str = "manifest.json";
const DEFAULT_HASHED_DIM: usize = 256;
/// Benchmark runs learn at a higher rate than the library default; see README.
const ABLATE_LR: f64 = 1e-3;

pub fn run(cli: &Cli, cfg: &FileConfig) -> CliResult<()> {
    match &cli.command {
        Command::Split(a) => split(a, cfg, cli.force),
        Command::Mine(a) => mine(a, cfg, cli.force),
        Command::Augment(a) => augment(a, cfg, cli.force),
        Command::Train(a) => train_cmd(a, cfg, cli.force),
        Command::Eval(a) => eval(a, cfg, cli.force),
        Command::Bench(a) => bench(a, cfg, cli.force),
        Command::Ablate(a) => ablate(a, cfg, cli.force),
    }
}

fn io_err(path: &Path, source: std::io::Error) -> CliError {
    CliError::Data(kbalign::Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn create_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let body = serde_json::to_string_pretty(value)?;
    std::fs::write(path, body + "\n").map_err(|e| io_err(path, e))
}

fn require_file(path: &Path) -> CliResult<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("no such file: {}", path.display())))
    }
}

/// Run manifest for one command: built from the resolved config and input
/// hashes before any work, saved with output hashes once the work is done.
struct Step<'a> {
    out: &'a Path,
    manifest: RunManifest,
}

impl<'a> Step<'a> {
    fn new(command: &str, out: &'a Path, config: Value, seeds: &[(&str, u64)], inputs: &[&Path]) -> CliResult<Self> {
        for p in inputs {
            require_file(p)?;
        }
        let seeds: BTreeMap<String, u64> = seeds.iter().map(|(k, v)| (k.to_string(), *v)).collect();
        Ok(Step {
            out,
            manifest: RunManifest::new(command, config, seeds, inputs)?,
        })
    }

    fn fresh(&self, force: bool) -> bool {
        if !force && self.manifest.up_to_date(&self.out.join(MANIFEST)) {
            eprintln!("{}: up to date, skipping ({})", self.manifest.command, self.out.display());
            return true;
        }
        false
    }

    fn finish(mut self, outputs: &[PathBuf]) -> CliResult<()> {
        let refs: Vec<&Path> = outputs.iter().map(PathBuf::as_path).collect();
        self.manifest.record_outputs(&refs)?;
        self.manifest.save(&self.out.join(MANIFEST))?;
        Ok(())
    }
}

fn split(a: &SplitArgs, cfg: &FileConfig, force: bool) -> CliResult<()> {
    let kb_path = cfg.require_path(a.kb.clone(), "kb")?;
    let out = cfg.require_path(a.out.clone(), "out")?;
    let index_frac: f64 = cfg.pick(a.index_frac, "index_frac", 0.5)?;
    let seed: u64 = cfg.pick(a.seed, "seed", 0)?;
    let lang: String = cfg.pick(a.lang.clone(), "lang", "en".into())?;
    let stratified = !(a.no_stratify || cfg.get::<bool>("no_stratify")?.unwrap_or(false));

    let config = json!({"index_frac": index_frac, "lang": lang, "stratified": stratified});
    let step = Step::new("split", &out, config, &[("split", seed)], &[&kb_path])?;
    if step.fresh(force) {
        return Ok(());
    }
    let kb = load_kb(&kb_path, &lang)?;
    let report = validate_kb(&kb);
    if !report.duplicate_texts.is_empty() {
        eprintln!("warning: {} duplicate texts in {}", report.duplicate_texts.len(), kb_path.display());
    }
    let split = split_kb(&kb, index_frac, seed, stratified)?;
    if !split.singleton_labels.is_empty() {
        eprintln!(
            "warning: {} labels have a single entry and cannot be mined",
            split.singleton_labels.len()
        );
    }
    create_dir(&out)?;
    split.save(&out, &split.manifest(seed, index_frac, stratified))?;
    eprintln!(
        "split: {} index, {} training -> {}",
        split.index_set.len(),
        split.training_set.len(),
        out.display()
    );
    step.finish(&["index.jsonl", "train.jsonl", "split.json"].map(|f| out.join(f)))
}

/// Provider settings from the config's "provider" object, with the
/// backend overridden by `--provider` and the stub seed by `seed`.
fn provider_config(flag: &Option<String>, cfg: &FileConfig, seed: Option<u64>) -> CliResult<ProviderConfig> {
    let mut obj = match cfg.get::<Value>("provider")? {
        Some(Value::Object(m)) => m,
        Some(_) => return Err(CliError::Usage("config key \"provider\" must be an object".into())),
        None => Default::default(),
    };
    let backend = match flag {
        Some(b) => b.clone(),
        None => obj.get("backend").and_then(Value::as_str).unwrap_or("stub").to_string(),
    };
    if backend != "stub" && backend != "http" {
        return Err(CliError::Usage(format!("--provider: unknown backend {backend:?} (expected stub or http)")));
    }
    obj.insert("backend".into(), Value::String(backend.clone()));
    if let (Some(s), "stub") = (seed, backend.as_str()) {
        obj.insert("seed".into(), json!(s));
    }
    serde_json::from_value(Value::Object(obj)).map_err(|e| CliError::Usage(format!("provider config: {e}")))
}

fn provider_failure(what: &str, errors: &[ItemError]) -> CliError {
    let first = &errors[0];
    let msg = format!("{} {what} failed; first: {}: {}", errors.len(), first.id, first.error);
    if errors.iter().any(|e| e.error.is_transport()) {
        CliError::Provider(msg)
    } else {
        CliError::Data(kbalign::Error::Invalid(msg))
    }
}

fn mine(a: &MineArgs, cfg: &FileConfig, force: bool) -> CliResult<()> {
    let split_dir = cfg.require_path(a.split.clone(), "split")?;
    let out = cfg.require_path(a.out.clone(), "out")?;
    let strategy: Strategy = cfg.pick(a.strategy, "strategy", Strategy::Hybrid)?;
    let k: Option<usize> = cfg.pick_opt(a.k, "k")?;
    let seed: u64 = cfg.pick(a.seed, "seed", 0)?;
    let lang: String = cfg.pick(a.lang.clone(), "lang", "xx".into())?;
    let translations_file: Option<PathBuf> = cfg.pick_opt(a.translations.clone(), "translations")?;
    let sim_file: Option<PathBuf> = cfg.pick_opt(a.label_sim.clone(), "label_sim")?;
    let mining = match k {
        Some(k) => MiningConfig::with_k(strategy, k, seed),
        None => MiningConfig::new(strategy, 3, seed),
    }
    .map_err(|e| CliError::Usage(e.to_string()))?;
    let provider = match translations_file {
        Some(_) => None,
        None => Some(provider_config(&a.provider.provider, cfg, None)?),
    };

    let mut inputs: Vec<PathBuf> = ["index.jsonl", "train.jsonl", "split.json"].map(|f| split_dir.join(f)).to_vec();
    inputs.extend(translations_file.iter().cloned());
    inputs.extend(sim_file.iter().cloned());
    let input_refs: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
    let config = json!({"mining": mining, "lang": lang, "provider": provider});
    let step = Step::new("mine", &out, config, &[("mine", seed)], &input_refs)?;
    if step.fresh(force) {
        return Ok(());
    }

    let split = KnowledgeBaseSplit::load(&split_dir, "src")?;
    create_dir(&out)?;
    let mut outputs = Vec::new();
    let translations = match (&translations_file, &provider) {
        (Some(path), _) => jsonl::read::<TranslationRecord>(path)?
            .into_iter()
            .map(|(_, r)| (r.id, r.text))
            .collect::<HashMap<_, _>>(),
        (None, Some(pc)) => {
            let gen = GenerationProvider::from_config(pc)?;
            let cache = out.join("translations.jsonl");
            let (map, errors) = translate_with_cache(&gen, &split.training_set, &lang, Some(&cache))?;
            if !errors.is_empty() {
                return Err(provider_failure("translations", &errors));
            }
            outputs.push(cache);
            map
        }
        (None, None) => unreachable!("provider resolved above"),
    };
    let sim = match &sim_file {
        Some(p) => LabelSimilarityMatrix::load(p)?,
        None => similarity_matrix(&SimilarityScorer::Lexical, &split_labels(&split))?,
    };
    let (pairs, report) = mine_dataset(&split, &translations, &sim, &mining)?;
    let paths = ["pairs.jsonl", "mining_report.json", "label_sim.json"].map(|f| out.join(f));
    save_pairs(&paths[0], &pairs)?;
    write_json(&paths[1], &report)?;
    sim.save(&paths[2])?;
    outputs.extend(paths);
    eprintln!(
        "mine: {} groups ({} positives, {} negatives), {} anchors skipped -> {}",
        report.anchors_mined,
        report.positives,
        report.negatives,
        report.skipped_no_positive,
        out.display()
    );
    step.finish(&outputs)
}

fn split_labels(split: &KnowledgeBaseSplit) -> Vec<String> {
    let mut labels: Vec<String> = split
        .index_set
        .iter()
        .chain(&split.training_set)
        .map(|e| e.label.clone())
        .collect();
    labels.sort();
    labels.dedup();
    labels
}

fn augment(a: &AugmentArgs, cfg: &FileConfig, force: bool) -> CliResult<()> {
    let queries_path = cfg.require_path(a.queries.clone(), "queries")?;
    let out = cfg.require_path(a.out.clone(), "out")?;
    let lang: String = cfg.pick(a.lang.clone(), "lang", "xx".into())?;
    let seed: Option<u64> = cfg.pick_opt(a.seed, "seed")?;
    let pc = provider_config(&a.provider.provider, cfg, seed)?;

    let config = json!({"lang": lang, "provider": pc});
    let seeds: Vec<(&str, u64)> = seed.map(|s| ("augment", s)).into_iter().collect();
    let step = Step::new("augment", &out, config, &seeds, &[&queries_path])?;
    if step.fresh(force) {
        return Ok(());
    }
    let queries = load_queries(&queries_path, &lang)?;
    let gen = GenerationProvider::from_config(&pc)?;
    create_dir(&out)?;
    let synthetic = out.join("synthetic.jsonl");
    let report_path = out.join("augment_report.json");
    let (report, errors) = augment_to_file(&gen, &queries, &synthetic)?;
    write_json(&report_path, &report)?;
    eprintln!(
        "augment: {}/{} groups ({} resumed, {} failed) -> {}",
        report.completed,
        report.n_queries,
        report.resumed,
        report.failures.len(),
        synthetic.display()
    );
    // Transport failures leave the run incomplete: no manifest, so a rerun resumes.
    if errors.iter().any(|e| e.error.is_transport()) {
        return Err(provider_failure("queries", &errors));
    }
    step.finish(&[synthetic, report_path])
}

/// Resolved embedding sources: a table per side when given, otherwise the
/// hashed n-gram embedder.
struct Embedders {
    kb: EmbeddingProvider,
    query: EmbeddingProvider,
    config: Value,
    inputs: Vec<PathBuf>,
}

fn embedders(a: &EmbedArgs, cfg: &FileConfig) -> CliResult<Embedders> {
    let kb_emb: Option<PathBuf> = cfg.pick_opt(a.kb_emb.clone(), "kb_emb")?;
    let query_emb: Option<PathBuf> = cfg.pick_opt(a.query_emb.clone(), "query_emb")?;
    let dim: usize = cfg.pick(a.hashed_dim, "hashed_dim", DEFAULT_HASHED_DIM)?;
    let seed: u64 = cfg.pick(a.hashed_seed, "hashed_seed", 0)?;
    let mut inputs = Vec::new();
    let mut side = |p: &Option<PathBuf>| -> CliResult<EmbeddingProvider> {
        Ok(match p {
            Some(p) => {
                require_file(p)?;
                inputs.push(p.clone());
                EmbeddingProvider::File(EmbeddingTable::load(p)?)
            }
            None => EmbeddingProvider::HashedNgram(HashedNgram::new(dim, seed).map_err(|e| CliError::Usage(e.to_string()))?),
        })
    };
    let kb = side(&kb_emb)?;
    let query = side(&query_emb)?;
    let hashed = (kb_emb.is_none() || query_emb.is_none()).then(|| json!({"dim": dim, "seed": seed}));
    Ok(Embedders {
        kb,
        query,
        config: json!({"hashed": hashed}),
        inputs,
    })
}

fn load_labeled(path: &Path) -> CliResult<Vec<LabeledQuery>> {
    require_file(path)?;
    Ok(jsonl::read::<LabeledQuery>(path)?.into_iter().map(|(_, q)| q).collect())
}

fn train_cmd(a: &TrainArgs, cfg: &FileConfig, force: bool) -> CliResult<()> {
    let pairs_files: Vec<PathBuf> = cfg.pick_list(&a.pairs, "pairs", Vec::new())?;
    if pairs_files.is_empty() {
        return Err(CliError::Usage("--pairs is required".into()));
    }
    let out = cfg.require_path(a.out.clone(), "out")?;
    let d = TrainConfig::default();
    let tc = TrainConfig {
        epochs: cfg.pick(a.epochs, "epochs", d.epochs)?,
        batch_size: cfg.pick(a.batch, "batch", d.batch_size)?,
        learning_rate: cfg.pick(a.lr, "lr", d.learning_rate)?,
        warmup_fraction: cfg.pick(a.warmup, "warmup", d.warmup_fraction)?,
        temperature: cfg.pick(a.temp, "temp", d.temperature)?,
        optimizer: cfg.pick(a.optimizer, "optimizer", d.optimizer)?,
        d_out: cfg.pick_opt(a.d_out, "d_out")?,
        seed: cfg.pick(a.seed, "seed", d.seed)?,
        ..d
    };
    tc.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let eval_index: Option<PathBuf> = cfg.pick_opt(a.eval_index.clone(), "eval_index")?;
    let eval_queries: Option<PathBuf> = cfg.pick_opt(a.eval_queries.clone(), "eval_queries")?;
    if eval_index.is_some() != eval_queries.is_some() {
        return Err(CliError::Usage("--eval-index and --eval-queries go together".into()));
    }
    let ks: Vec<usize> = cfg.pick_list(&a.ks, "ks", DEFAULT_KS.to_vec())?;
    let emb = embedders(&a.embed, cfg)?;

    let mut inputs = pairs_files.clone();
    inputs.extend(emb.inputs.iter().cloned());
    inputs.extend(eval_index.iter().chain(&eval_queries).cloned());
    let input_refs: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
    let config = json!({"train": tc, "embedding": emb.config, "ks": ks});
    let step = Step::new("train", &out, config, &[("train", tc.seed)], &input_refs)?;
    if step.fresh(force) {
        return Ok(());
    }

    let mut pairs: Vec<ContrastivePair> = Vec::new();
    for p in &pairs_files {
        pairs.extend(load_pairs(p)?);
    }
    let groups = build_groups(&pairs, &emb.query, &emb.kb)?;
    let eval_set = match (&eval_index, &eval_queries) {
        (Some(i), Some(q)) => Some(build_eval_set(&load_labeled(i)?, &load_labeled(q)?, &emb.kb, &emb.query, &ks)?),
        _ => None,
    };
    let outcome = train(&groups.groups, &tc, eval_set.as_ref())?;
    create_dir(&out)?;
    let paths = ["adapter.json", "epochs.csv", "train_report.json"].map(|f| out.join(f));
    outcome.adapter.save(&paths[0])?;
    write_epoch_csv(&paths[1], &outcome.epochs)?;
    write_json(
        &paths[2],
        &json!({"groups": groups.groups.len(), "dropped": groups.dropped, "epochs": outcome.epochs}),
    )?;
    if let Some(last) = outcome.epochs.last() {
        eprintln!("train: {} groups, epoch {} mean loss {:.4}", groups.groups.len(), last.epoch, last.mean_loss);
    }
    eprintln!("train: adapter -> {}", paths[0].display());
    step.finish(&paths)
}

fn eval(a: &EvalArgs, cfg: &FileConfig, force: bool) -> CliResult<()> {
    let out = cfg.require_path(a.out.clone(), "out")?;
    if let Some(log) = cfg.pick_opt::<PathBuf>(a.per_epoch.clone(), "per_epoch")? {
        return eval_per_epoch(&log, &out, force);
    }
    let index_path = cfg.require_path(a.index.clone(), "index")?;
    let queries_path = cfg.require_path(a.queries.clone(), "queries")?;
    let adapter_path: Option<PathBuf> = cfg.pick_opt(a.adapter.clone(), "adapter")?;
    let ks: Vec<usize> = cfg.pick_list(&a.ks, "ks", DEFAULT_KS.to_vec())?;
    let relevance: Relevance = cfg.pick(a.relevance, "relevance", Relevance::Label)?;
    let emb = embedders(&a.embed, cfg)?;

    let mut inputs = vec![index_path.clone(), queries_path.clone()];
    inputs.extend(adapter_path.iter().cloned());
    inputs.extend(emb.inputs.iter().cloned());
    let input_refs: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
    let config = json!({"ks": ks, "relevance": relevance, "embedding": emb.config});
    let step = Step::new("eval", &out, config, &[], &input_refs)?;
    if step.fresh(force) {
        return Ok(());
    }

    let adapter = adapter_path.as_deref().map(AdapterModel::load).transpose()?;
    let entries = load_labeled(&index_path)?
        .into_iter()
        .map(|e| {
            let v = emb.kb.embed_text(&e.id, &e.text)?;
            Ok((e, v))
        })
        .collect::<kbalign::Result<Vec<_>>>()?;
    let queries = load_labeled(&queries_path)?
        .into_iter()
        .map(|q| {
            Ok(EvalQuery {
                vector: emb.query.embed_text(&q.id, &q.text)?.values,
                id: q.id,
                truth: q.label,
            })
        })
        .collect::<kbalign::Result<Vec<_>>>()?;
    let index = build_index(&entries, adapter.as_ref())?;
    let output = evaluate(&index, &queries, &ks, adapter.as_ref(), relevance)?;
    create_dir(&out)?;
    let paths = ["report.json", "per_query.csv"].map(|f| out.join(f));
    output.write_report(&paths[0])?;
    output.write_per_query_csv(&paths[1])?;
    let mut line = format!("eval: {} queries", output.report.n_queries);
    for (k, r) in &output.report.recall {
        let _ = write!(line, ", R@{k} {r:.4}");
    }
    let _ = write!(line, ", MRR {:.4}", output.report.mrr);
    println!("{line}");
    step.finish(&paths)
}

/// Turns the trainer's epoch log into a metric-per-epoch curve.
fn eval_per_epoch(log: &Path, out: &Path, force: bool) -> CliResult<()> {
    let step = Step::new("eval-per-epoch", out, json!({}), &[], &[log])?;
    if step.fresh(force) {
        return Ok(());
    }
    let rows = read_epoch_csv(log)?;
    if rows.iter().any(|r| r.metrics.iter().all(Option::is_none)) {
        return Err(CliError::Data(kbalign::Error::Invalid(format!(
            "{} has epochs without metrics; train with --eval-index and --eval-queries",
            log.display()
        ))));
    }
    let mut body = String::from("epoch,recall@1,recall@3,recall@5,recall@10,mrr,mean_loss\n");
    for r in &rows {
        let _ = write!(body, "{}", r.epoch);
        for m in r.metrics {
            body.push(',');
            if let Some(v) = m {
                let _ = write!(body, "{v}");
            }
        }
        let _ = writeln!(body, ",{}", r.mean_loss);
    }
    create_dir(out)?;
    let path = out.join("curve.csv");
    std::fs::write(&path, body).map_err(|e| io_err(&path, e))?;
    eprintln!("eval: {} epochs -> {}", rows.len(), path.display());
    step.finish(&[path])
}

fn bench_spec(file: Option<PathBuf>) -> CliResult<BenchmarkSpec> {
    match file {
        Some(p) => {
            require_file(&p)?;
            let body = std::fs::read_to_string(&p).map_err(|e| io_err(&p, e))?;
            Ok(serde_json::from_str(&body)?)
        }
        None => Ok(BenchmarkSpec::default()),
    }
}

fn bench(a: &BenchArgs, cfg: &FileConfig, force: bool) -> CliResult<()> {
    let out = cfg.require_path(a.out.clone(), "out")?;
    let mut spec = cfg.get::<BenchmarkSpec>("bench")?.unwrap_or_default();
    spec.seed = cfg.pick(a.seed, "seed", spec.seed)?;
    spec.n_labels = cfg.pick(a.labels, "labels", spec.n_labels)?;
    spec.queries_per_label = cfg.pick(a.per_label, "per_label", spec.queries_per_label)?;
    spec.dim = cfg.pick(a.dim, "dim", spec.dim)?;
    spec.sigma = cfg.pick(a.sigma, "sigma", spec.sigma)?;
    spec.validate().map_err(|e| CliError::Usage(e.to_string()))?;

    let step = Step::new("bench", &out, serde_json::to_value(&spec)?, &[("bench", spec.seed)], &[])?;
    if step.fresh(force) {
        return Ok(());
    }
    let data = gen_benchmark(&spec)?;
    data.save(&out)?;
    eprintln!("bench: {} entries, {} labels -> {}", data.kb.len(), spec.n_labels, out.display());
    step.finish(&BENCH_FILES.map(|f| out.join(f)))
}

fn ablate(a: &AblateArgs, cfg: &FileConfig, force: bool) -> CliResult<()> {
    let out = cfg.require_path(a.out.clone(), "out")?;
    let spec_file: Option<PathBuf> = cfg.pick_opt(a.bench_spec.clone(), "bench_spec")?;
    let spec = bench_spec(spec_file.clone())?;
    spec.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let strategies: Vec<Strategy> = cfg.pick_list(&a.strategies, "strategies", Strategy::ALL.to_vec())?;
    let n_seeds: usize = cfg.pick(a.seeds, "seeds", 5)?;
    if n_seeds == 0 {
        return Err(CliError::Usage("--seeds must be positive".into()));
    }
    let base_seed: u64 = cfg.pick(a.seed, "seed", 0)?;
    let index_frac: f64 = cfg.pick(a.index_frac, "index_frac", 0.5)?;
    let d = TrainConfig::default();
    let tc = TrainConfig {
        epochs: cfg.pick(a.epochs, "epochs", d.epochs)?,
        batch_size: cfg.pick(a.batch, "batch", d.batch_size)?,
        learning_rate: cfg.pick(a.lr, "lr", ABLATE_LR)?,
        temperature: cfg.pick(a.temp, "temp", d.temperature)?,
        optimizer: cfg.pick::<OptimizerKind>(a.optimizer, "optimizer", d.optimizer)?,
        ..d
    };
    tc.validate().map_err(|e| CliError::Usage(e.to_string()))?;

    let config = json!({
        "bench": spec,
        "strategies": strategies,
        "n_seeds": n_seeds,
        "index_frac": index_frac,
        "train": tc,
    });
    let inputs: Vec<&Path> = spec_file.iter().map(PathBuf::as_path).collect();
    let step = Step::new(
        "ablate",
        &out,
        config,
        &[("bench", spec.seed), ("split", spec.seed), ("base", base_seed)],
        &inputs,
    )?;
    if step.fresh(force) {
        return Ok(());
    }
    let data = gen_benchmark(&spec)?;
    let prep = prepare(&data, index_frac, spec.seed, &DEFAULT_KS)?;
    let table = run_ablation(&prep, &strategies, n_seeds, base_seed, &tc)?;
    create_dir(&out)?;
    let rendered = table.render();
    let paths = ["ablation.json", "ablation.md"].map(|f| out.join(f));
    write_json(&paths[0], &table)?;
    std::fs::write(&paths[1], &rendered).map_err(|e| io_err(&paths[1], e))?;
    println!("{rendered}");
    step.finish(&paths)
}
