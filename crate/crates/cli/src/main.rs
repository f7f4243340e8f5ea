mod config;

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use medium_fusion::construction::{
    load_requests, CacheMode, CachedKnowledgeGraph, CachedLanguageModel, ConstructionRequest, EndpointConfig,
    HttpKnowledgeGraph, HttpLanguageModel, KnowledgeGraph, LanguageModel, Pipeline, PromptSet, ResponseCache,
};
use medium_fusion::coupled_graph::{
    format_histogram, load_corpus, load_manifest, relation_histogram, save_corpus, save_manifest, verify_manifest,
    CoupledInstance, Manifest,
};
use medium_fusion::fusion::{AttentionNorm, AttentionRecord};
use medium_fusion::harness::{
    ablate_gmf, evaluate_with_trace, generate_synthetic, sweep_lambda, sweep_layers, train_model, EvalReport, Model,
    SyntheticSpec, TrainConfig, LAMBDA_GRID, LAYER_GRID,
};
use medium_fusion::numeric::{load_checkpoint, load_embeddings};

use config::FileConfig;

#[derive(Parser)]
#[command(name = "mfuse", version, about = "Coupled scene/concept graph reasoning")]
struct Cli {
    /// TOML file with [train], [synthetic] and [construction] sections.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a corpus from captions or image references via the LLM and KG services.
    Construct(ConstructArgs),
    /// Generate a synthetic corpus.
    Gen(GenArgs),
    /// Train a model and write a run directory.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a corpus.
    Eval(EvalArgs),
    /// Sweep the layer count or the medium-loss weight.
    Sweep(SweepArgs),
    /// Compare training with and without medium exchange.
    Ablate(AblateArgs),
    /// Print the relation histogram of a corpus.
    Stats(StatsArgs),
}

#[derive(Args)]
struct ConstructArgs {
    /// JSONL requests: id, image_ref, question, optional caption, topic_entities, gold_answers.
    #[arg(long, conflicts_with = "image_refs")]
    requests: Option<PathBuf>,
    /// Plain list, one `image_ref<TAB>question` per line.
    #[arg(long)]
    image_refs: Option<PathBuf>,
    #[arg(long)]
    templates: Option<PathBuf>,
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    #[arg(long, value_parser = parse_cache_mode)]
    cache_mode: Option<CacheMode>,
    #[arg(long)]
    hop_limit: Option<u32>,
    #[arg(long)]
    llm_url: Option<String>,
    #[arg(long)]
    kg_url: Option<String>,
    /// Output corpus; the manifest is written next to it.
    #[arg(long, short)]
    out: PathBuf,
    /// Keep going when an instance fails, logging the error.
    #[arg(long)]
    skip_failures: bool,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    n_instances: Option<usize>,
    #[arg(long)]
    scene_entities: Option<usize>,
    #[arg(long)]
    mediums: Option<usize>,
    #[arg(long)]
    distractors: Option<usize>,
    #[arg(long)]
    hop_depth: Option<usize>,
    #[arg(long)]
    world_objects: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args, Default)]
struct TrainFlags {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    context_dim: Option<usize>,
    #[arg(long)]
    sigma: Option<f64>,
    /// Disable medium exchange between the branches.
    #[arg(long)]
    no_exchange: bool,
    /// Skip the exchange after the last layer.
    #[arg(long)]
    no_final_exchange: bool,
    /// Train on the inference loss alone.
    #[arg(long)]
    no_medium_loss: bool,
    #[arg(long, value_parser = parse_norm)]
    attention_norm: Option<AttentionNorm>,
    #[arg(long)]
    leaky_slope: Option<f64>,
    #[arg(long)]
    target_accuracy: Option<f64>,
    /// Entity vectors, one `name<TAB>values…` per line.
    #[arg(long)]
    entity_vectors: Option<PathBuf>,
    /// Question vectors in the same format, keyed by question text.
    #[arg(long)]
    context_vectors: Option<PathBuf>,
}

impl TrainFlags {
    fn apply(&self, mut cfg: TrainConfig) -> TrainConfig {
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.epochs {
            cfg.epochs = v;
        }
        if let Some(v) = self.learning_rate {
            cfg.learning_rate = v;
        }
        if let Some(v) = self.dim {
            cfg.dim = v;
        }
        if let Some(v) = self.context_dim {
            cfg.context_dim = v;
        }
        if let Some(v) = self.sigma {
            cfg.sigma = v;
        }
        if let Some(v) = self.attention_norm {
            cfg.attention_norm = v;
        }
        if let Some(v) = self.leaky_slope {
            cfg.leaky_slope = v;
        }
        if self.target_accuracy.is_some() {
            cfg.target_accuracy = self.target_accuracy;
        }
        cfg.exchange_enabled &= !self.no_exchange;
        cfg.exchange_after_final &= !self.no_final_exchange;
        cfg.medium_loss_enabled &= !self.no_medium_loss;
        cfg
    }

    fn model(&self, cfg: TrainConfig) -> Result<Model> {
        let (entities, contexts) = self.vectors(&cfg)?;
        Ok(Model::with_vectors(cfg, entities, contexts)?)
    }

    fn vectors(&self, cfg: &TrainConfig) -> Result<(Vectors, Vectors)> {
        let load = |p: &Option<PathBuf>, dim: usize| -> Result<Vectors> {
            match p {
                Some(p) => load_embeddings(p, dim).with_context(|| format!("reading {}", p.display())),
                None => Ok(BTreeMap::new()),
            }
        };
        Ok((
            load(&self.entity_vectors, cfg.dim)?,
            load(&self.context_vectors, cfg.context_dim)?,
        ))
    }
}

type Vectors = BTreeMap<String, Vec<f64>>;

/// The two swept hyperparameters; `sweep` replaces them with grid selectors.
#[derive(Args, Default)]
struct ShapeFlags {
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
}

impl ShapeFlags {
    fn apply(&self, mut cfg: TrainConfig) -> TrainConfig {
        if let Some(v) = self.layers {
            cfg.layers = v;
        }
        if let Some(v) = self.lambda {
            cfg.lambda = v;
        }
        cfg
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Held-out corpus for the final report; defaults to the training corpus.
    #[arg(long)]
    eval_corpus: Option<PathBuf>,
    #[arg(long)]
    run_dir: PathBuf,
    #[command(flatten)]
    shape: ShapeFlags,
    #[command(flatten)]
    flags: TrainFlags,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    /// Directory for the report, predictions and attention trace.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    shape: ShapeFlags,
    #[command(flatten)]
    flags: TrainFlags,
}

#[derive(Args)]
#[command(group = clap::ArgGroup::new("param").required(true))]
struct SweepArgs {
    #[arg(long, group = "param")]
    layers: bool,
    #[arg(long, group = "param")]
    lambda: bool,
    /// Layer count used while sweeping the loss weight.
    #[arg(long)]
    base_layers: Option<usize>,
    /// Loss weight used while sweeping the layer count.
    #[arg(long)]
    base_lambda: Option<f64>,
    /// Comma-separated grid replacing the default one.
    #[arg(long, value_delimiter = ',')]
    grid: Vec<f64>,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    eval_corpus: Option<PathBuf>,
    #[arg(long)]
    run_dir: PathBuf,
    #[command(flatten)]
    flags: TrainFlags,
}

#[derive(Args)]
struct AblateArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    eval_corpus: Option<PathBuf>,
    #[arg(long)]
    run_dir: PathBuf,
    #[command(flatten)]
    shape: ShapeFlags,
    #[command(flatten)]
    flags: TrainFlags,
}

#[derive(Args)]
struct StatsArgs {
    corpus: PathBuf,
    /// Check ids, checksums and relation counts against this manifest.
    #[arg(long)]
    manifest: Option<PathBuf>,
}

fn parse_cache_mode(s: &str) -> Result<CacheMode, String> {
    match s {
        "record" => Ok(CacheMode::Record),
        "replay_only" | "replay-only" => Ok(CacheMode::ReplayOnly),
        "off" => Ok(CacheMode::Off),
        other => Err(format!("unknown cache mode `{other}` (record, replay_only, off)")),
    }
}

fn parse_norm(s: &str) -> Result<AttentionNorm, String> {
    match s {
        "exp" => Ok(AttentionNorm::Exp),
        "plain" => Ok(AttentionNorm::Plain),
        other => Err(format!("unknown attention norm `{other}` (exp, plain)")),
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    let file = FileConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Construct(a) => construct(&file, a),
        Command::Gen(a) => gen(&file, a),
        Command::Train(a) => train_cmd(&file, a),
        Command::Eval(a) => eval_cmd(&file, a),
        Command::Sweep(a) => sweep_cmd(&file, a),
        Command::Ablate(a) => ablate_cmd(&file, a),
        Command::Stats(a) => stats(a),
    }
}

pub fn manifest_path(corpus: &Path) -> PathBuf {
    corpus.with_extension("manifest.json")
}

fn write_corpus(corpus: &[CoupledInstance], out: &Path) -> Result<()> {
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    save_corpus(corpus, out)?;
    save_manifest(&Manifest::build(corpus)?, &manifest_path(out))?;
    Ok(())
}

fn read_corpus(path: &Path) -> Result<Vec<CoupledInstance>> {
    load_corpus(path).with_context(|| format!("reading corpus {}", path.display()))
}

fn read_image_refs(path: &Path) -> Result<Vec<ConstructionRequest>> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().filter(|l| !l.trim().is_empty()).enumerate() {
        let Some((image_ref, question)) = line.split_once('\t') else {
            bail!("{}: line {} needs `image_ref<TAB>question`", path.display(), i + 1);
        };
        out.push(ConstructionRequest {
            id: format!("req-{i:05}"),
            image_ref: image_ref.trim().to_string(),
            question: question.trim().to_string(),
            caption: None,
            topic_entities: Vec::new(),
            gold_answers: Vec::new(),
        });
    }
    Ok(out)
}

fn endpoint(url: Option<String>, configured: Option<EndpointConfig>) -> EndpointConfig {
    let mut cfg = configured.unwrap_or_default();
    if let Some(u) = url {
        cfg.base_url = u;
    }
    cfg
}

fn cached<'a, L, K>(
    llm: L,
    kg: K,
    cache: Option<&ResponseCache>,
    mode: CacheMode,
) -> (Box<dyn LanguageModel + 'a>, Box<dyn KnowledgeGraph + 'a>)
where
    L: LanguageModel + 'a,
    K: KnowledgeGraph + 'a,
{
    match cache {
        Some(c) => (
            Box::new(CachedLanguageModel::new(llm, c.clone(), mode)),
            Box::new(CachedKnowledgeGraph::new(kg, c.clone(), mode)),
        ),
        None => (Box::new(llm), Box::new(kg)),
    }
}

fn construct(file: &FileConfig, a: ConstructArgs) -> Result<()> {
    let settings = file.construction.clone();
    let requests = match (&a.requests, &a.image_refs) {
        (Some(p), _) => load_requests(p)?,
        (None, Some(p)) => read_image_refs(p)?,
        (None, None) => bail!("one of --requests or --image-refs is required"),
    };
    let prompts = match a.templates.or(settings.template_dir) {
        Some(dir) => PromptSet::from_dir(&dir)?,
        None => PromptSet::default(),
    };
    let mode = a.cache_mode.or(settings.cache_mode).unwrap_or_default();
    let cache = match a.cache_dir.or(settings.cache_dir) {
        Some(dir) => Some(ResponseCache::open(dir)?),
        None => None,
    };
    let llm = HttpLanguageModel::new(endpoint(a.llm_url, settings.llm));
    let kg = HttpKnowledgeGraph::new(endpoint(a.kg_url, settings.kg));
    let (llm, kg) = cached(llm, kg, cache.as_ref(), mode);

    let mut pipeline = Pipeline::new(llm.as_ref(), kg.as_ref());
    pipeline.prompts = prompts;
    pipeline.hop_limit = a.hop_limit.or(settings.hop_limit).unwrap_or(pipeline.hop_limit);

    let mut corpus = Vec::with_capacity(requests.len());
    let mut failures = 0usize;
    for req in &requests {
        match pipeline.build_instance(req) {
            Ok(out) => {
                for w in &out.warnings {
                    log::warn!("{}: {w}", req.id);
                }
                for r in &out.extraction.rejected {
                    log::info!("{}: rejected {:?} ({})", req.id, r.line, r.reason);
                }
                corpus.push(out.instance);
            }
            Err(e) if a.skip_failures => {
                failures += 1;
                log::error!("{}: {e}", req.id);
            }
            Err(e) => return Err(e).with_context(|| format!("request `{}`", req.id)),
        }
    }
    write_corpus(&corpus, &a.out)?;
    println!(
        "wrote {} instance(s) to {} ({failures} failed)",
        corpus.len(),
        a.out.display()
    );
    Ok(())
}

fn gen(file: &FileConfig, a: GenArgs) -> Result<()> {
    let mut spec: SyntheticSpec = file.synthetic.clone();
    let overrides = [
        (a.n_instances, &mut spec.n_instances),
        (a.scene_entities, &mut spec.scene_entities),
        (a.mediums, &mut spec.mediums),
        (a.distractors, &mut spec.distractors),
        (a.hop_depth, &mut spec.hop_depth),
        (a.world_objects, &mut spec.world_objects),
    ];
    for (flag, field) in overrides {
        if let Some(v) = flag {
            *field = v;
        }
    }
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    let corpus = generate_synthetic(&spec)?;
    write_corpus(&corpus, &a.out)?;
    println!("wrote {} instance(s) to {}", corpus.len(), a.out.display());
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn write_jsonl<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    for r in rows {
        serde_json::to_writer(&mut out, &r)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct TraceRow<'a> {
    id: &'a str,
    #[serde(flatten)]
    record: &'a AttentionRecord,
}

fn write_eval_artifacts(dir: &Path, report: &EvalReport, traces: &[(String, Vec<AttentionRecord>)]) -> Result<()> {
    write_jsonl(&dir.join("predictions.jsonl"), &report.predictions)?;
    write_jsonl(
        &dir.join("attention.jsonl"),
        traces
            .iter()
            .flat_map(|(id, recs)| recs.iter().map(move |record| TraceRow { id, record })),
    )?;
    Ok(())
}

#[derive(Serialize)]
struct Summary<'a> {
    exact_accuracy: f64,
    soft_accuracy: f64,
    mean_loss: &'a medium_fusion::objectives::LossBreakdown,
    epochs_run: usize,
    best_epoch: Option<usize>,
    instances: usize,
}

fn report_text(report: &EvalReport) -> String {
    format!(
        "exact accuracy  {:.2}%\nsoft accuracy   {:.2}%\nmean joint loss {:.6}\nmean inference  {:.6}\nmean medium     {:.6}\n",
        report.exact_accuracy * 100.0,
        report.soft_accuracy * 100.0,
        report.mean_loss.joint,
        report.mean_loss.inference,
        report.mean_loss.medium,
    )
}

fn snapshot(dir: &Path, file: &FileConfig, cfg: &TrainConfig) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let snap = FileConfig {
        train: cfg.clone(),
        ..file.clone()
    };
    fs::write(dir.join("config.toml"), snap.to_toml()?)?;
    Ok(())
}

fn train_cmd(file: &FileConfig, a: TrainArgs) -> Result<()> {
    let mut cfg = a.flags.apply(a.shape.apply(file.train.clone()));
    cfg.checkpoint = Some(a.run_dir.join("checkpoint.json"));
    snapshot(&a.run_dir, file, &cfg)?;
    let corpus = read_corpus(&a.corpus)?;
    let held_out = match &a.eval_corpus {
        Some(p) => Some(read_corpus(p)?),
        None => None,
    };

    let model = a.flags.model(cfg)?;
    let outcome = train_model(model, &corpus)?;
    medium_fusion::numeric::save_checkpoint(&outcome.model.store, &a.run_dir.join("final.json"))?;
    write_jsonl(&a.run_dir.join("history.jsonl"), &outcome.history)?;

    let (mut report, traces) = evaluate_with_trace(&outcome.model, held_out.as_deref().unwrap_or(&corpus), true)?;
    report.loss_curve = outcome.history.iter().map(|h| h.loss).collect();
    write_eval_artifacts(&a.run_dir, &report, &traces)?;
    write_json(
        &a.run_dir.join("summary.json"),
        &Summary {
            exact_accuracy: report.exact_accuracy,
            soft_accuracy: report.soft_accuracy,
            mean_loss: &report.mean_loss,
            epochs_run: outcome.history.len(),
            best_epoch: outcome.best_epoch,
            instances: report.predictions.len(),
        },
    )?;
    let text = report_text(&report);
    fs::write(a.run_dir.join("report.txt"), &text)?;
    print!("{text}");
    Ok(())
}

fn eval_cmd(file: &FileConfig, a: EvalArgs) -> Result<()> {
    let cfg = a.flags.apply(a.shape.apply(file.train.clone()));
    let store = load_checkpoint(&a.checkpoint).with_context(|| format!("reading {}", a.checkpoint.display()))?;
    let (entities, contexts) = a.flags.vectors(&cfg)?;
    let model = Model::from_store(cfg, store, entities, contexts)?;
    let corpus = read_corpus(&a.corpus)?;
    let (report, traces) = evaluate_with_trace(&model, &corpus, a.out.is_some())?;
    let text = report_text(&report);
    if let Some(dir) = &a.out {
        fs::create_dir_all(dir)?;
        write_eval_artifacts(dir, &report, &traces)?;
        write_json(&dir.join("eval.json"), &report)?;
        fs::write(dir.join("report.txt"), &text)?;
    }
    print!("{text}");
    Ok(())
}

fn corpora(train: &Path, eval: Option<&Path>) -> Result<(Vec<CoupledInstance>, Vec<CoupledInstance>)> {
    let t = read_corpus(train)?;
    let e = match eval {
        Some(p) => read_corpus(p)?,
        None => t.clone(),
    };
    Ok((t, e))
}

fn sweep_cmd(file: &FileConfig, a: SweepArgs) -> Result<()> {
    let shape = ShapeFlags {
        layers: a.base_layers,
        lambda: a.base_lambda,
    };
    let mut cfg = a.flags.apply(shape.apply(file.train.clone()));
    cfg.checkpoint = None;
    snapshot(&a.run_dir, file, &cfg)?;
    let (train_set, eval_set) = corpora(&a.corpus, a.eval_corpus.as_deref())?;
    let table = if a.layers {
        let grid: Vec<usize> = if a.grid.is_empty() {
            LAYER_GRID.to_vec()
        } else {
            a.grid
                .iter()
                .map(|&g| {
                    if g >= 1.0 && g.fract() == 0.0 {
                        Ok(g as usize)
                    } else {
                        Err(g)
                    }
                })
                .collect::<Result<_, _>>()
                .map_err(|g| anyhow::anyhow!("layer grid value {g} is not a positive integer"))?
        };
        sweep_layers(&train_set, &eval_set, &cfg, &grid)?
    } else {
        let grid = if a.grid.is_empty() {
            LAMBDA_GRID.to_vec()
        } else {
            a.grid.clone()
        };
        sweep_lambda(&train_set, &eval_set, &cfg, &grid)?
    };
    write_json(&a.run_dir.join("sweep.json"), &table)?;
    let text = table.format();
    fs::write(a.run_dir.join("report.txt"), &text)?;
    print!("{text}");
    Ok(())
}

fn ablate_cmd(file: &FileConfig, a: AblateArgs) -> Result<()> {
    let mut cfg = a.flags.apply(a.shape.apply(file.train.clone()));
    cfg.checkpoint = None;
    snapshot(&a.run_dir, file, &cfg)?;
    let (train_set, eval_set) = corpora(&a.corpus, a.eval_corpus.as_deref())?;
    let report = ablate_gmf(&train_set, &eval_set, &cfg)?;
    write_json(&a.run_dir.join("ablation.json"), &report)?;
    let text = report.format();
    fs::write(a.run_dir.join("report.txt"), &text)?;
    print!("{text}");
    Ok(())
}

fn stats(a: StatsArgs) -> Result<()> {
    let corpus = read_corpus(&a.corpus)?;
    if let Some(m) = &a.manifest {
        let manifest = load_manifest(m).with_context(|| format!("reading manifest {}", m.display()))?;
        verify_manifest(&corpus, &manifest)?;
        println!("manifest ok: {} instance(s)", corpus.len());
    }
    print!("{}", format_histogram(&relation_histogram(&corpus)));
    Ok(())
}
