//! Command implementations behind the `mcd` binary.
//!
//! Every command writes its human-readable output to the supplied writer and
//! returns an exit status, so the binary stays a thin shell and tests can
//! drive commands in-process.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{ArgAction, Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::eval::{render_html, MetricsReport};
use crate::graph::{find_active_path, is_d_separated, render_path, Dag, NodeSet};
use crate::rationale::{
    evaluate_split, train_from, write_metric_log, Checkpoint, Objective, Rationalizer, TrainConfig,
};
use crate::rng::{stream, Stream};
use crate::scm::{assignment, beer_toy_scm_with, generate_splits, CorpusSpec, Record, ScmError};
use crate::text::{
    balance_classes, load_embeddings, read_jsonl, write_jsonl, Example, Vocabulary, MAX_LEN,
};

#[derive(Debug, Parser)]
#[command(
    name = "mcd",
    version,
    about = "Rationalization by minimum conditional dependence"
)]
pub struct Cli {
    /// Repeat for more detail on stderr.
    #[arg(short, long, action = ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the toy model's closed-form probabilities by exact enumeration.
    ScmVerify(ScmVerifyArgs),
    /// Decide d-separation of two node sets given a third.
    DsepCheck(DsepArgs),
    /// Write train/dev/test JSON-lines splits from a corpus spec.
    Generate(GenerateArgs),
    /// Train a rationalizer from a run config.
    Train(TrainArgs),
    /// Score a checkpoint on a dataset.
    Eval(EvalArgs),
    /// Write an HTML page of the rationales a checkpoint selects.
    Render(RenderArgs),
}

#[derive(Debug, Args)]
pub struct ScmVerifyArgs {
    /// Lower the confounder strength from 0.9 to 0.8 before enumerating.
    #[arg(long)]
    pub perturb: bool,
}

#[derive(Debug, Args)]
pub struct DsepArgs {
    /// Graph file: `{"nodes": [...], "edges": [[parent, child], ...]}`.
    pub graph: PathBuf,
    /// Comma-separated node names.
    #[arg(long, value_delimiter = ',', required = true)]
    pub a: Vec<String>,
    #[arg(long, value_delimiter = ',', required = true)]
    pub b: Vec<String>,
    /// Conditioning set; empty when omitted.
    #[arg(long, value_delimiter = ',')]
    pub c: Vec<String>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Corpus spec (TOML).
    pub spec: PathBuf,
    /// Output directory for train.jsonl, dev.jsonl and test.jsonl.
    #[arg(short, long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 0.8)]
    pub train_fraction: f64,
    #[arg(long, default_value_t = 0.1)]
    pub dev_fraction: f64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Run config (TOML).
    pub config: PathBuf,
    #[arg(long)]
    pub objective: Option<Objective>,
    /// Pretrain a skewed explainer to this first-token accuracy first.
    #[arg(long)]
    pub skew: Option<f64>,
    #[arg(long)]
    pub sparsity: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the config's output directory.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    pub checkpoint: PathBuf,
    /// JSON-lines dataset.
    pub dataset: PathBuf,
    /// Write the report here instead of stdout.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    pub checkpoint: PathBuf,
    pub dataset: PathBuf,
    /// Output HTML file.
    pub out: PathBuf,
    /// Render only the first N examples.
    #[arg(long)]
    pub limit: Option<usize>,
}

/// Data sources of a training run. Relative paths resolve against the config
/// file's directory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataPaths {
    pub train: Option<PathBuf>,
    pub dev: Option<PathBuf>,
    pub test: Option<PathBuf>,
    /// GloVe-style text vectors copied into both embedding tables.
    pub embeddings: Option<PathBuf>,
    /// Subsample the training set to equal class counts.
    pub balance: bool,
}

/// Everything `mcd train` reads from its config file.
///
/// Either `[data]` names dataset files or `[corpus]` describes a synthetic
/// corpus generated in memory with the default 80/10/10 split. A top-level
/// `seed` overrides `training.seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub verbosity: u8,
    #[serde(default)]
    pub data: DataPaths,
    #[serde(default)]
    pub corpus: Option<CorpusSpec>,
    #[serde(default)]
    pub training: TrainConfig,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("run")
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg: Self =
            toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in [
            &mut cfg.data.train,
            &mut cfg.data.dev,
            &mut cfg.data.test,
            &mut cfg.data.embeddings,
        ]
        .into_iter()
        .flatten()
        {
            rebase(p);
        }
        rebase(&mut cfg.out_dir);
        Ok(cfg)
    }
}

/// Summary written next to the checkpoint after training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub objective: Objective,
    pub seed: u64,
    pub best_epoch: usize,
    pub epochs_run: usize,
    /// First-token accuracy reached by skew pretraining.
    pub pre_acc: Option<f64>,
    pub skew_epochs: Option<usize>,
    pub test: Option<MetricsReport>,
}

/// Parses arguments and runs one command, returning the process exit status.
pub fn run(cli: Cli, out: &mut dyn Write) -> Result<u8> {
    match cli.command {
        Command::ScmVerify(a) => cmd_scm_verify(&a, out),
        Command::DsepCheck(a) => cmd_dsep_check(&a, out),
        Command::Generate(a) => cmd_generate(&a, out),
        Command::Train(a) => cmd_train(&a, cli.verbose, out),
        Command::Eval(a) => cmd_eval(&a, out),
        Command::Render(a) => cmd_render(&a, out),
    }
}

/// One closed-form probability compared against exact enumeration.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub query: &'static str,
    pub expected: f64,
    pub computed: f64,
}

pub const CHECK_TOLERANCE: f64 = 1e-12;

impl Check {
    pub fn passed(&self) -> bool {
        (self.expected - self.computed).abs() <= CHECK_TOLERANCE
    }
}

/// Enumerates the toy model at the given confounder strength (label fidelity
/// stays 0.9) and compares against the published closed forms.
pub fn scm_checks(correlation_strength: f64) -> Result<Vec<Check>, ScmError> {
    let scm = beer_toy_scm_with(correlation_strength, 0.9)?;
    let none = assignment([]);
    let xt1 = assignment([("X_T", 1)]);
    Ok(vec![
        Check {
            query: "P(X_S=1)",
            expected: 0.5,
            computed: scm.query(&assignment([("X_S", 1)]), &none)?,
        },
        Check {
            query: "P(U=1|X_T=1)",
            expected: 0.9,
            computed: scm.query(&assignment([("U", 1)]), &xt1)?,
        },
        Check {
            query: "P(X_S=1|X_T=1)",
            expected: 0.9 * 0.9 + 0.1 * 0.1,
            computed: scm.query(&assignment([("X_S", 1)]), &xt1)?,
        },
        Check {
            query: "P(Y_S=1|X_T=1)",
            expected: 0.82 * 0.9 + 0.18 * 0.1,
            computed: scm.query(&assignment([("Y_S", 1)]), &xt1)?,
        },
    ])
}

pub fn cmd_scm_verify(args: &ScmVerifyArgs, out: &mut dyn Write) -> Result<u8> {
    let strength = if args.perturb { 0.8 } else { 0.9 };
    let checks = scm_checks(strength)?;
    writeln!(
        out,
        "{:<18} {:>10} {:>20} {:>10}  status",
        "query", "expected", "computed", "|diff|"
    )?;
    for c in &checks {
        writeln!(
            out,
            "{:<18} {:>10} {:>20} {:>10.3e}  {}",
            c.query,
            c.expected,
            c.computed,
            (c.expected - c.computed).abs(),
            if c.passed() { "pass" } else { "FAIL" }
        )?;
    }
    let passed = checks.iter().filter(|c| c.passed()).count();
    writeln!(out, "{passed}/{} checks passed", checks.len())?;
    for c in checks.iter().filter(|c| !c.passed()) {
        eprintln!(
            "mismatch: {} expected {} but enumeration gives {}",
            c.query, c.expected, c.computed
        );
    }
    Ok(u8::from(passed != checks.len()))
}

fn node_set(names: &[String]) -> NodeSet {
    names
        .iter()
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .collect()
}

pub fn cmd_dsep_check(args: &DsepArgs, out: &mut dyn Write) -> Result<u8> {
    let g = Dag::load(&args.graph)?;
    let (a, b, c) = (node_set(&args.a), node_set(&args.b), node_set(&args.c));
    if is_d_separated(&g, &a, &b, &c)? {
        writeln!(out, "d-separated")?;
    } else {
        writeln!(out, "d-connected")?;
        if let Some(path) = find_active_path(&g, &a, &b, &c)? {
            writeln!(out, "path: {}", render_path(&g, &path))?;
        }
    }
    Ok(0)
}

pub fn cmd_generate(args: &GenerateArgs, out: &mut dyn Write) -> Result<u8> {
    let text = fs::read_to_string(&args.spec)
        .with_context(|| format!("reading {}", args.spec.display()))?;
    let mut spec: CorpusSpec =
        toml::from_str(&text).with_context(|| format!("parsing {}", args.spec.display()))?;
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let splits = generate_splits(&spec, (args.train_fraction, args.dev_fraction))?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    for (name, records) in [
        ("train", &splits.train),
        ("dev", &splits.dev),
        ("test", &splits.test),
    ] {
        let path = args.out.join(format!("{name}.jsonl"));
        write_jsonl(&path, records)?;
        writeln!(out, "{}: {} records", path.display(), records.len())?;
    }
    Ok(0)
}

fn read_records(path: &Path) -> Result<Vec<Record>> {
    read_jsonl(path, MAX_LEN).with_context(|| format!("reading {}", path.display()))
}

fn gold_of(data: &[Example]) -> Option<Vec<Vec<u8>>> {
    data.iter().map(|e| e.gold.clone()).collect()
}

/// Metrics of `model` on `data` with deterministic masks.
pub fn metrics_report(model: &Rationalizer, data: &[Example]) -> Result<MetricsReport> {
    let ev = evaluate_split(model, data, 256);
    let probs: Vec<&[f64]> = ev.rationale_probs.iter().map(|p| p.probs()).collect();
    let labels: Vec<usize> = data.iter().map(|e| e.label).collect();
    let gold = gold_of(data);
    let mut report = MetricsReport::compute(&ev.masks, gold.as_deref(), &probs, &labels)?;
    report.full_input_accuracy = Some(ev.full_accuracy);
    Ok(report)
}

pub fn cmd_train(args: &TrainArgs, verbose: u8, out: &mut dyn Write) -> Result<u8> {
    let run = RunConfig::load(&args.config)?;
    let mut cfg = run.training.clone();
    if let Some(seed) = args.seed.or(run.seed) {
        cfg.seed = seed;
    }
    if let Some(o) = args.objective {
        cfg.objective = o;
    }
    if args.skew.is_some() {
        cfg.skew = args.skew;
    }
    if let Some(s) = args.sparsity {
        cfg.sparsity = s;
    }
    cfg.validate()?;
    let verbose = verbose.max(run.verbosity);

    let (train_rec, dev_rec, test_rec) = match (&run.corpus, &run.data.train, &run.data.dev) {
        (_, Some(tr), Some(dv)) => (
            read_records(tr)?,
            read_records(dv)?,
            run.data.test.as_deref().map(read_records).transpose()?,
        ),
        (Some(spec), None, None) => {
            let s = generate_splits(spec, (0.8, 0.1))?;
            (s.train, s.dev, Some(s.test))
        }
        _ => bail!("config needs either data.train and data.dev, or a [corpus] section"),
    };
    let vocab = Vocabulary::from_records(&train_rec);
    let mut train_set = vocab.encode_all(&train_rec);
    if run.data.balance {
        train_set = balance_classes(&train_set, &mut stream(cfg.seed, Stream::Balance))?;
    }
    let dev_set = vocab.encode_all(&dev_rec);

    let mut model = Rationalizer::init(&cfg, vocab.len());
    if let Some(path) = &run.data.embeddings {
        let table = load_embeddings(path, &vocab, &mut stream(cfg.seed, Stream::Embeddings))?;
        if table.dim() != cfg.embed_dim {
            bail!(
                "{} has dimension {} but training.embed_dim is {}",
                path.display(),
                table.dim(),
                cfg.embed_dim
            );
        }
        model.explainer.embedding = table.weights.clone();
        model.predictor.embedding = table.weights;
    }

    let outcome = train_from(&cfg, model, &train_set, &dev_set)?;
    let dir = args.out.clone().unwrap_or(run.out_dir);
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    write_metric_log(&dir.join("metrics.csv"), &outcome.log)?;
    fs::write(dir.join("config.toml"), cfg.to_toml())?;
    let mut ck = Checkpoint::new(
        cfg.clone(),
        vocab.clone(),
        outcome.model.clone(),
        outcome.best_epoch,
    );
    ck.skew = outcome.skew;
    ck.save(&dir.join("checkpoint.json"))?;

    let test = test_rec
        .map(|t| metrics_report(&outcome.model, &vocab.encode_all(&t)))
        .transpose()?;
    let summary = TrainSummary {
        objective: cfg.objective,
        seed: cfg.seed,
        best_epoch: outcome.best_epoch,
        epochs_run: outcome.log.len(),
        pre_acc: outcome.skew.map(|s| s.pre_acc),
        skew_epochs: outcome.skew.map(|s| s.epochs),
        test,
    };
    fs::write(
        dir.join("summary.json"),
        serde_json::to_string_pretty(&summary)? + "\n",
    )?;

    if verbose > 0 {
        for r in &outcome.log {
            eprintln!(
                "epoch {:>3}  loss {:.4}  dev acc {:.4}  dev f1 {}  sparsity {:.1}%",
                r.epoch,
                r.prediction_loss,
                r.dev_accuracy,
                r.dev_f1.map_or("-".into(), |f| format!("{f:.4}")),
                r.dev_sparsity
            );
        }
    }
    if let Some(s) = outcome.skew {
        writeln!(
            out,
            "skew pretraining: pre_acc {:.4} after {} epochs",
            s.pre_acc, s.epochs
        )?;
    }
    writeln!(
        out,
        "{}: best epoch {} of {}; wrote {}",
        cfg.objective,
        outcome.best_epoch,
        outcome.log.len(),
        dir.display()
    )?;
    Ok(0)
}

fn load_for_eval(
    checkpoint: &Path,
    dataset: &Path,
) -> Result<(Checkpoint, Vec<Record>, Vec<Example>)> {
    let ck = Checkpoint::load(checkpoint)?;
    let records = read_records(dataset)?;
    let data = ck.vocab.encode_all(&records);
    if data.is_empty() {
        bail!("{} has no records", dataset.display());
    }
    Ok((ck, records, data))
}

pub fn cmd_eval(args: &EvalArgs, out: &mut dyn Write) -> Result<u8> {
    let (ck, _, data) = load_for_eval(&args.checkpoint, &args.dataset)?;
    let json = metrics_report(&ck.model, &data)?.to_json() + "\n";
    match &args.out {
        Some(p) => fs::write(p, json).with_context(|| format!("writing {}", p.display()))?,
        None => out.write_all(json.as_bytes())?,
    }
    Ok(0)
}

pub fn cmd_render(args: &RenderArgs, out: &mut dyn Write) -> Result<u8> {
    let (ck, mut records, mut data) = load_for_eval(&args.checkpoint, &args.dataset)?;
    if let Some(n) = args.limit {
        records.truncate(n);
        data.truncate(n);
    }
    let masks = evaluate_split(&ck.model, &data, 256).masks;
    let tokens: Vec<Vec<String>> = records.into_iter().map(|r| r.tokens).collect();
    let gold = gold_of(&data);
    fs::write(&args.out, render_html(&tokens, &masks, gold.as_deref())?)
        .with_context(|| format!("writing {}", args.out.display()))?;
    writeln!(
        out,
        "wrote {} examples to {}",
        tokens.len(),
        args.out.display()
    )?;
    Ok(0)
}
