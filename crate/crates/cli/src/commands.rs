use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use log::{info, warn};

use retrogan::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
use retrogan::config::{BenchmarkEntry, RunConfigFile, DEFAULT_PRESET};
use retrogan::embeddings::{
    align_pairs, load_table, nearest_neighbors, post_specialize, preprocess, save_table,
    EmbeddingTable, PairedCorpus,
};
use retrogan::evaluation::{
    evaluate_split, load_constraints, load_named_dataset, write_reports, ConstraintVocab,
    Constraints, EvalMode, EvalReport, MissingPolicy, SimilarityDataset,
};
use retrogan::harness::{ablation_harness, ook_harness, AblationMode, OokReport};
use retrogan::models::RetroGanModel;
use retrogan::synthetic::{synthesize_paired_corpus, SyntheticSpec};
use retrogan::trainer::{run_to_completion, train as train_model, EvalSnapshot, TrainLog, Trainer, Validator};

use crate::{AblateArgs, EvaluateArgs, GenSyntheticArgs, NeighborsArgs, OokArgs, PostspecializeArgs, RunArgs};

type Result<T> = anyhow::Result<T>;

const INFER_BATCH: usize = 512;

/// Malformed command-line input detected outside clap.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

pub fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<UsageError>().is_some() {
        return 2;
    }
    if let Some(e) = err.downcast_ref::<retrogan::Error>() {
        return if e.is_input_error() { 2 } else { 1 };
    }
    if err.downcast_ref::<std::io::Error>().is_some() {
        return 2;
    }
    1
}

/// The error chain joined by `: `, skipping causes already spelled out by
/// the message before them.
pub fn describe(err: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in err.chain() {
        let text = cause.to_string();
        if !out.ends_with(&text) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&text);
        }
    }
    out
}

/// Resolves preset, file and flags into the effective configuration.
fn effective_config(run: &RunArgs) -> Result<RunConfigFile> {
    let text = match &run.config {
        Some(p) => Some(
            fs::read_to_string(p).map_err(|e| retrogan::Error::Io {
                path: p.clone(),
                source: e,
            })?,
        ),
        None => None,
    };
    let mut cfg = RunConfigFile::resolve(text.as_deref(), DEFAULT_PRESET, run.preset.as_deref())
        .with_context(|| match &run.config {
            Some(p) => format!("reading {}", p.display()),
            None => "building configuration".into(),
        })?;
    // file-relative data paths
    if let Some(base) = run.config.as_ref().and_then(|p| p.parent()) {
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in [
            &mut cfg.data.x_embeddings,
            &mut cfg.data.y_embeddings,
            &mut cfg.data.constraints,
        ]
        .into_iter()
        .flatten()
        {
            rebase(p);
        }
        for b in &mut cfg.data.benchmarks {
            rebase(&mut b.path);
        }
    }
    let t = &mut cfg.train;
    if let Some(v) = run.seed {
        t.seed = v;
        cfg.synthetic.seed = v;
    }
    if let Some(v) = run.total_batches {
        t.total_batches = v;
    }
    if let Some(v) = run.batch_size {
        t.batch_size = v;
    }
    if let Some(v) = run.g_lr {
        t.g_lr = v;
    }
    if let Some(v) = run.d_lr {
        t.d_lr = v;
    }
    if let Some(v) = run.eval_every {
        t.eval_every = v;
    }
    if let Some(v) = run.dis_train_amount {
        t.dis_train_amount = v;
    }
    if let Some(v) = run.train_plain_discriminators {
        t.train_plain_discriminators = v;
    }
    if let Some(v) = run.hidden {
        t.arch.generator_size = v;
        t.arch.discriminator_size = v;
    }
    if let Some(p) = &run.x_embeddings {
        cfg.data.x_embeddings = Some(p.clone());
    }
    if let Some(p) = &run.y_embeddings {
        cfg.data.y_embeddings = Some(p.clone());
    }
    if let Some(p) = &run.constraints {
        cfg.data.constraints = Some(p.clone());
    }
    if !run.benchmarks.is_empty() {
        cfg.data.benchmarks = run
            .benchmarks
            .iter()
            .map(|b| BenchmarkEntry::from_arg(b))
            .collect::<retrogan::Result<_>>()?;
    }
    if run.synthetic {
        cfg.train.arch.dim = cfg.synthetic.dim;
    }
    cfg.train.validate()?;
    Ok(cfg)
}

fn configure_jobs(jobs: Option<usize>) -> Result<()> {
    if let Some(n) = jobs {
        if n == 0 {
            return Err(usage("--jobs must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    Ok(())
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| retrogan::Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    Ok(())
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    fs::write(path, contents).map_err(|e| retrogan::Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(())
}

fn read_table(path: &Path, expected_dim: Option<usize>) -> Result<EmbeddingTable> {
    let (t, _) = load_table(path, expected_dim).with_context(|| format!("loading {}", path.display()))?;
    Ok(t)
}

fn read_datasets(entries: &[BenchmarkEntry]) -> Result<Vec<SimilarityDataset>> {
    entries
        .iter()
        .map(|b| {
            let format = b.dataset_format()?;
            load_named_dataset(&b.path, format, &b.display_name())
                .with_context(|| format!("loading {}", b.path.display()))
        })
        .collect()
}

/// Everything a training command consumes.
struct RunData {
    x: EmbeddingTable,
    y: EmbeddingTable,
    corpus: PairedCorpus,
    constraints: Option<Constraints>,
    datasets: Vec<SimilarityDataset>,
}

fn load_run_data(cfg: &RunConfigFile, synthetic: bool, out: &Path) -> Result<RunData> {
    if synthetic {
        let c = synthesize_paired_corpus(&cfg.synthetic)?;
        write_synthetic(&c, &out.join("synthetic"))?;
        let corpus = c.training_corpus();
        let mut datasets = c.datasets.clone();
        if !cfg.data.benchmarks.is_empty() {
            datasets.extend(read_datasets(&cfg.data.benchmarks)?);
        }
        return Ok(RunData {
            x: c.x,
            y: c.y,
            corpus,
            constraints: Some(c.constraints),
            datasets,
        });
    }
    let (Some(xp), Some(yp)) = (&cfg.data.x_embeddings, &cfg.data.y_embeddings) else {
        return Err(usage(
            "need --x and --y (or [data] x_embeddings/y_embeddings), or --synthetic",
        ));
    };
    let dim = Some(cfg.train.arch.dim);
    let x = preprocess(&read_table(xp, dim)?).with_context(|| format!("normalizing {}", xp.display()))?;
    let y = preprocess(&read_table(yp, dim)?).with_context(|| format!("normalizing {}", yp.display()))?;
    let (corpus, report) = align_pairs(&x, &y)?;
    info!(
        "{} paired words ({} only in x, {} only in y)",
        report.paired, report.dropped_x, report.dropped_y
    );
    let constraints = match &cfg.data.constraints {
        Some(p) => Some(load_constraints(p).with_context(|| format!("loading {}", p.display()))?),
        None => None,
    };
    Ok(RunData {
        x,
        y,
        corpus,
        constraints,
        datasets: read_datasets(&cfg.data.benchmarks)?,
    })
}

/// Scores snapshots by the mean ρ over the benchmarks that can be scored.
struct BenchmarkValidator {
    table: EmbeddingTable,
    datasets: Vec<SimilarityDataset>,
}

impl BenchmarkValidator {
    fn new(x: &EmbeddingTable, datasets: &[SimilarityDataset]) -> Option<Self> {
        if datasets.is_empty() {
            return None;
        }
        let words: std::collections::BTreeSet<String> = datasets.iter().flat_map(|d| d.words()).collect();
        let present: Vec<&String> = words.iter().filter(|w| x.contains(w)).collect();
        Some(BenchmarkValidator {
            table: x.subset(&present),
            datasets: datasets.to_vec(),
        })
    }
}

impl Validator for BenchmarkValidator {
    fn validate(&self, model: &RetroGanModel) -> retrogan::Result<EvalSnapshot> {
        let specialized = post_specialize(&self.table, model, INFER_BATCH)?;
        let mut snapshot = EvalSnapshot::default();
        for ds in &self.datasets {
            match evaluate_split(&specialized, ds, &ConstraintVocab::default(), EvalMode::All, MissingPolicy::Skip) {
                Ok(r) => {
                    snapshot.metrics.insert(ds.name.clone(), r.rho);
                }
                Err(retrogan::Error::UndefinedCorrelation(_)) => {}
                Err(e) => return Err(e),
            }
        }
        if snapshot.metrics.is_empty() {
            return Err(retrogan::Error::UndefinedCorrelation(
                "no benchmark could be scored on the training table".into(),
            ));
        }
        snapshot.score = snapshot.metrics.values().sum::<f64>() / snapshot.metrics.len() as f64;
        Ok(snapshot)
    }
}

/// Reports for every dataset in `all` mode, plus `disjoint` and `full` when
/// constraints are known. Splits with too few pairs are skipped with a warning.
fn benchmark_reports(
    table: &EmbeddingTable,
    datasets: &[SimilarityDataset],
    constraints: Option<&Constraints>,
) -> Result<Vec<EvalReport>> {
    let vocab = constraints.map(Constraints::vocab).unwrap_or_default();
    let modes: &[EvalMode] = if constraints.is_some() {
        &[EvalMode::All, EvalMode::Disjoint, EvalMode::Full]
    } else {
        &[EvalMode::All]
    };
    let mut out = Vec::new();
    for ds in datasets {
        for &mode in modes {
            match evaluate_split(table, ds, &vocab, mode, MissingPolicy::Skip) {
                Ok(r) => out.push(r),
                Err(retrogan::Error::UndefinedCorrelation(m)) => warn!("{} ({mode}): {m}", ds.name),
                Err(e) => return Err(e.into()),
            }
        }
    }
    Ok(out)
}

fn reports_tsv(reports: &[EvalReport]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_reports(reports, &mut buf)?;
    Ok(buf)
}

fn write_config(cfg: &RunConfigFile, out: &Path) -> Result<()> {
    write_file(&out.join("config.toml"), cfg.to_toml()?.as_bytes())
}

fn write_log(log: &TrainLog, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    log.write_jsonl(&mut buf)?;
    write_file(path, &buf)
}

pub fn train(run: &RunArgs) -> Result<()> {
    configure_jobs(run.jobs)?;
    let cfg = effective_config(run)?;
    let out = &run.output;
    create_dir(out)?;
    write_config(&cfg, out)?;
    let data = load_run_data(&cfg, run.synthetic, out)?;
    info!(
        "training on {} pairs for {} batches (seed {})",
        data.corpus.len(),
        cfg.train.total_batches,
        cfg.train.seed
    );
    let validator = BenchmarkValidator::new(&data.x, &data.datasets);
    let mut trainer = Trainer::new(cfg.train.clone())?;
    let outcome = run_to_completion(
        &mut trainer,
        &data.corpus,
        validator.as_ref().map(|v| v as &dyn Validator),
    )?;
    save_checkpoint(&trainer.checkpoint(), out.join("final.ckpt"))?;
    if let Some(best) = &outcome.best {
        // the best snapshot keeps only its weights; optimizer moments are fresh
        let mut ckpt = Checkpoint::untrained(best.model.clone(), cfg.train.clone());
        ckpt.step = best.step;
        save_checkpoint(&ckpt, out.join("best.ckpt"))?;
        info!("best snapshot at step {} (score {:.4})", best.step, best.score);
    }
    write_log(&outcome.log, &out.join("train_log.jsonl"))?;
    if !data.datasets.is_empty() {
        let specialized = post_specialize(&data.x, &outcome.model, INFER_BATCH)?;
        let reports = benchmark_reports(&specialized, &data.datasets, data.constraints.as_ref())?;
        write_file(&out.join("report.tsv"), &reports_tsv(&reports)?)?;
    }
    info!("artifacts written to {}", out.display());
    Ok(())
}

pub fn postspecialize(a: &PostspecializeArgs) -> Result<()> {
    let ckpt = load_checkpoint(&a.checkpoint, None)
        .with_context(|| format!("loading {}", a.checkpoint.display()))?;
    let table = read_table(&a.input, Some(ckpt.model.dim()))?;
    let table = preprocess(&table).with_context(|| format!("normalizing {}", a.input.display()))?;
    let mapped = post_specialize(&table, &ckpt.model, a.batch_size)?;
    save_table(&mapped, &a.output)?;
    info!("wrote {} vectors to {}", mapped.len(), a.output.display());
    Ok(())
}

pub fn evaluate(a: &EvaluateArgs) -> Result<()> {
    let mode: EvalMode = a.mode.parse().map_err(|_| usage(format!("unknown --mode {:?}", a.mode)))?;
    let policy: MissingPolicy = a
        .missing
        .parse()
        .map_err(|_| usage(format!("unknown --missing {:?}", a.missing)))?;
    let table = read_table(&a.table, None)?;
    let entries: Vec<BenchmarkEntry> = a
        .datasets
        .iter()
        .map(|d| BenchmarkEntry::from_arg(d))
        .collect::<retrogan::Result<_>>()?;
    let datasets = read_datasets(&entries)?;
    let vocab = match &a.constraints {
        Some(p) => load_constraints(p)
            .with_context(|| format!("loading {}", p.display()))?
            .vocab(),
        None => ConstraintVocab::default(),
    };
    let reports = datasets
        .iter()
        .map(|ds| {
            evaluate_split(&table, ds, &vocab, mode, policy)
                .with_context(|| format!("evaluating {}", ds.name))
        })
        .collect::<Result<Vec<_>>>()?;
    std::io::stdout().write_all(&reports_tsv(&reports)?)?;
    Ok(())
}

pub fn neighbors(a: &NeighborsArgs) -> Result<()> {
    let table = read_table(&a.table, None)?;
    let list = nearest_neighbors(&table, &a.word, a.k)?;
    let mut out = String::from("rank\tword\tcosine\n");
    for (i, (w, c)) in list.iter().enumerate() {
        out.push_str(&format!("{}\t{w}\t{c:.6}\n", i + 1));
    }
    std::io::stdout().write_all(out.as_bytes())?;
    Ok(())
}

pub fn ook(a: &OokArgs) -> Result<()> {
    configure_jobs(a.run.jobs)?;
    let cfg = effective_config(&a.run)?;
    let out = &a.run.output;
    create_dir(out)?;
    write_config(&cfg, out)?;
    let data = load_run_data(&cfg, a.run.synthetic, out)?;
    let Some(constraints) = &data.constraints else {
        return Err(usage("the OOK grid needs --constraints (or --synthetic)"));
    };
    if data.datasets.is_empty() {
        return Err(usage("the OOK grid needs at least one --benchmark (or --synthetic)"));
    }
    let rows = ook_harness(
        &data.x,
        &data.y,
        constraints,
        &data.datasets,
        &a.fractions,
        cfg.train.seed,
        MissingPolicy::Skip,
        |f, corpus| {
            info!("fraction {f}: training on {} pairs", corpus.len());
            Ok(train_model(corpus, &cfg.train, None)?.model)
        },
    )?;
    let mut text = format!("{}\n", OokReport::TSV_HEADER);
    for r in &rows {
        text.push_str(&r.to_tsv());
        text.push('\n');
    }
    write_file(&out.join("ook.tsv"), text.as_bytes())?;
    std::io::stdout().write_all(text.as_bytes())?;
    Ok(())
}

pub fn ablate(a: &AblateArgs) -> Result<()> {
    let mode: AblationMode = a.mode.parse().map_err(|_| usage(format!("unknown --mode {:?}", a.mode)))?;
    configure_jobs(a.run.jobs)?;
    let cfg = effective_config(&a.run)?;
    let out = &a.run.output;
    create_dir(out)?;
    write_config(&cfg, out)?;
    let data = load_run_data(&cfg, a.run.synthetic, out)?;
    let validator = BenchmarkValidator::new(&data.x, &data.datasets);
    let runs = ablation_harness(
        &data.corpus,
        &cfg.train,
        mode,
        validator.as_ref().map(|v| v as &dyn Validator),
    )?;
    let dir = out.join("ablation");
    create_dir(&dir)?;
    let mut text = String::from("label\tfinal_total\tbest_step\tbest_score\n");
    for r in &runs {
        write_log(&r.outcome.log, &dir.join(format!("{}.jsonl", r.label)))?;
        let last = r.outcome.log.steps().last().map(|s| s.losses.total);
        let fmt = |v: Option<f64>| v.map(|v| format!("{v:.6}")).unwrap_or_else(|| "NA".into());
        let best = r.outcome.best.as_ref();
        text.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            r.label,
            fmt(last),
            best.map(|b| b.step.to_string()).unwrap_or_else(|| "NA".into()),
            fmt(best.map(|b| b.score)),
        ));
    }
    write_file(&out.join("ablation.tsv"), text.as_bytes())?;
    std::io::stdout().write_all(text.as_bytes())?;
    Ok(())
}

fn write_synthetic(c: &retrogan::synthetic::SyntheticCorpus, dir: &Path) -> Result<()> {
    create_dir(dir)?;
    save_table(&c.x, dir.join("x.txt"))?;
    save_table(&c.y, dir.join("y.txt"))?;
    let mut buf = Vec::new();
    c.constraints.write(&mut buf)?;
    write_file(&dir.join("constraints.txt"), &buf)?;
    for ds in &c.datasets {
        let mut buf = Vec::new();
        ds.write_tsv(&mut buf)?;
        write_file(&dir.join(format!("{}.tsv", ds.name)), &buf)?;
    }
    let mut clusters = String::from("word\tcluster\theld_out\n");
    for (i, w) in c.x.words().iter().enumerate() {
        clusters.push_str(&format!(
            "{w}\t{}\t{}\n",
            c.truth.cluster_of[i], c.truth.held_out[i]
        ));
    }
    write_file(&dir.join("clusters.tsv"), clusters.as_bytes())?;
    let spec = toml::to_string(&c.spec).context("serializing synthetic spec")?;
    write_file(&dir.join("spec.toml"), spec.as_bytes())
}

pub fn gen_synthetic(a: &GenSyntheticArgs) -> Result<()> {
    let spec = SyntheticSpec {
        seed: a.seed,
        vocab_size: a.vocab_size,
        dim: a.dim,
        n_clusters: a.clusters,
        collapse_strength: a.collapse,
        antonym_fraction: a.antonyms,
        holdout_fraction: a.holdout,
        spread: a.spread,
        dataset_pairs: a.pairs,
    };
    let c = synthesize_paired_corpus(&spec)?;
    write_synthetic(&c, &a.output)?;
    info!(
        "wrote {} words, {} constraint pairs and {} benchmarks to {}",
        c.x.len(),
        c.constraints.pairs.len(),
        c.datasets.len(),
        a.output.display()
    );
    if c.datasets.iter().any(|d| d.len() < 2) {
        bail!("a synthetic benchmark has fewer than two pairs");
    }
    Ok(())
}
