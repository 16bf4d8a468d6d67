//! The commands behind the `modir` binary.
//!
//! Every command writes its artifacts under the directory or file named by
//! `--out` and prints a short human-readable summary to the writer it is
//! given. With the same inputs and seed, all outputs are byte-identical.
//!
//! A run directory produced by `train` holds:
//!
//! | file | contents |
//! |------|----------|
//! | `config.json` | the resolved run configuration, written before the first step |
//! | `corpora.json` | paths and SHA-256 digests of the corpus files used |
//! | `metrics.jsonl` | one evaluation report per line |
//! | `checkpoints/step-NNNNNN.json` | intermediate checkpoints every `checkpoint_every` steps |
//! | `checkpoints/final.json` | the checkpoint after the last step |
//!
//! `report` adds `domain_acc_vs_step.csv` and `invariance_vs_ndcg.csv`.

pub mod config;
pub mod project;
pub mod report;

use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use sha2::{Digest, Sha256};

use crate::encoder::hex_digest;
use crate::metrics::{EvalReport, Evaluate, Evaluator};
use crate::synthdata::{generate, read_corpus, write_corpus, Collection, Corpus, Domain};
use crate::trainer::{Checkpoint, Mode, Trainer};
use crate::{Error, Result};

pub use config::RunConfig;

pub const SOURCE_FILE: &str = "source.jsonl";
pub const TARGET_FILE: &str = "target.jsonl";
pub const CONFIG_FILE: &str = "config.json";
pub const CORPORA_FILE: &str = "corpora.json";
pub const METRICS_FILE: &str = "metrics.jsonl";
pub const CHECKPOINT_DIR: &str = "checkpoints";
pub const FINAL_CHECKPOINT: &str = "final.json";

#[derive(Debug, Parser)]
#[command(name = "modir", version, about = "Momentum-adversarial domain-invariant dense retrieval")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a source/target corpus pair.
    Generate(GenerateArgs),
    /// Train an encoder and populate a run directory.
    Train(TrainArgs),
    /// Evaluate a checkpoint on labeled corpora.
    Eval(EvalArgs),
    /// Write a 2-D PCA projection of all embeddings as CSV.
    Project(ProjectArgs),
    /// Summarize a run directory's metrics as CSV tables.
    Report(ReportArgs),
    /// Print the default configuration file.
    Defaults(DefaultsArgs),
}

#[derive(Debug, Clone, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory for `source.jsonl`, `target.jsonl` and `config.json`.
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides `generate.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    /// Defaults to the checkpoint's own configuration when resuming.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory holding `source.jsonl` and `target.jsonl`.
    #[arg(long)]
    pub corpora: PathBuf,
    /// Run directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides `train.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub force: bool,
    /// Continue from this checkpoint instead of starting fresh.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    /// Its `train.eval` section replaces the checkpoint's evaluation settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub corpora: PathBuf,
    /// nDCG cutoff; defaults to the checkpoint's evaluation setting.
    #[arg(long)]
    pub k: Option<usize>,
    /// Seed for the domain probe; defaults to the checkpoint's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Report file; defaults to `eval-step-NNNNNN.json` beside the checkpoint.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Clone, Args)]
pub struct DefaultsArgs {
    /// Fill in and validate this file instead of starting from the built-in defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Write to this file instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides both `generate.seed` and `train.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Clone, Args)]
pub struct ProjectArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub corpora: PathBuf,
    /// CSV file to write.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    /// Run directory containing `metrics.jsonl`.
    #[arg(long)]
    pub run: PathBuf,
    /// Where to write the CSV tables; defaults to the run directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub force: bool,
}

/// Process exit status for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Usage(_) => 2,
        Error::Diverged { .. } => 3,
        _ => 1,
    }
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Generate(a) => cmd_generate(&a, out).map(|_| ()),
        Command::Train(a) => cmd_train(&a, out).map(|_| ()),
        Command::Eval(a) => cmd_eval(&a, out).map(|_| ()),
        Command::Project(a) => cmd_project(&a, out).map(|_| ()),
        Command::Report(a) => cmd_report(&a, out).map(|_| ()),
        Command::Defaults(a) => cmd_defaults(&a, out),
    }
}

fn say(out: &mut dyn Write, text: &str) -> Result<()> {
    out.write_all(text.as_bytes()).map_err(|e| Error::io("<stdout>", e))
}

/// Writes `bytes` to a sibling temporary file, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    {
        let mut f = File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn refuse_existing(path: &Path, force: bool) -> Result<()> {
    if path.exists() && !force {
        return Err(Error::Usage(format!("{} exists; pass --force to overwrite", path.display())));
    }
    Ok(())
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn file_digest(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut h = Sha256::new();
    h.update(&bytes);
    Ok(hex_digest(h))
}

/// Reads `source.jsonl` and `target.jsonl` from `dir`.
pub fn load_corpora(dir: &Path) -> Result<(Corpus, Corpus)> {
    let (source, _) = read_corpus(&dir.join(SOURCE_FILE))?;
    let (target, _) = read_corpus(&dir.join(TARGET_FILE))?;
    for (c, want, file) in [(&source, Domain::Source, SOURCE_FILE), (&target, Domain::Target, TARGET_FILE)] {
        if c.domain() != want {
            return Err(Error::Format {
                path: dir.join(file),
                message: format!("expected a {} corpus, found {}", want.as_str(), c.domain().as_str()),
            });
        }
    }
    Ok((source, target))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_json(&text).map_err(|e| match e {
        Error::Json(j) => Error::Format {
            path: path.to_path_buf(),
            message: j.to_string(),
        },
        other => other,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerateOutput {
    pub source: PathBuf,
    pub target: PathBuf,
    pub config: PathBuf,
}

pub fn cmd_generate(args: &GenerateArgs, out: &mut dyn Write) -> Result<GenerateOutput> {
    let mut cfg = RunConfig::load(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        cfg.generate.seed = seed;
    }
    cfg.generate.validate()?;
    let paths = GenerateOutput {
        source: args.out.join(SOURCE_FILE),
        target: args.out.join(TARGET_FILE),
        config: args.out.join(CONFIG_FILE),
    };
    for p in [&paths.source, &paths.target, &paths.config] {
        refuse_existing(p, args.force)?;
    }
    let (source, target) = generate(&cfg.generate)?;
    create_dir(&args.out)?;
    write_atomic(&paths.config, cfg.to_pretty_json()?.as_bytes())?;
    write_corpus(&paths.source, &source, Some(&cfg.generate))?;
    write_corpus(&paths.target, &target, Some(&cfg.generate))?;
    for (c, p) in [(&source as &dyn Collection, &paths.source), (&target, &paths.target)] {
        say(
            out,
            &format!(
                "wrote {} ({} queries, {} documents)\n",
                p.display(),
                c.queries().len(),
                c.documents().len()
            ),
        )?;
    }
    Ok(paths)
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub run_dir: PathBuf,
    pub final_checkpoint: PathBuf,
    pub reports: Vec<EvalReport>,
}

const RUN_ARTIFACTS: [&str; 5] = [
    CONFIG_FILE,
    CORPORA_FILE,
    METRICS_FILE,
    report::DOMAIN_ACC_CSV,
    report::INVARIANCE_CSV,
];

fn prepare_run_dir(dir: &Path, force: bool) -> Result<()> {
    if dir.exists() {
        let mut entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        if entries.next().is_some() {
            if !force {
                return Err(Error::Usage(format!(
                    "run directory {} is not empty; pass --force to overwrite",
                    dir.display()
                )));
            }
            for name in RUN_ARTIFACTS {
                let p = dir.join(name);
                if p.exists() {
                    fs::remove_file(&p).map_err(|e| Error::io(&p, e))?;
                }
            }
            let ck = dir.join(CHECKPOINT_DIR);
            if ck.exists() {
                fs::remove_dir_all(&ck).map_err(|e| Error::io(&ck, e))?;
            }
        }
    }
    create_dir(&dir.join(CHECKPOINT_DIR))
}

pub fn cmd_train(args: &TrainArgs, out: &mut dyn Write) -> Result<TrainOutcome> {
    let resumed = args.resume.as_deref().map(load_checkpoint).transpose()?;
    let mut cfg = match (&args.config, &resumed) {
        (None, Some(ck)) => RunConfig {
            train: ck.config.clone(),
            ..RunConfig::default()
        },
        (path, _) => RunConfig::load(path.as_deref())?,
    };
    if let Some(seed) = args.seed {
        cfg.train.seed = seed;
    }
    cfg.train.validate()?;

    let (source, target) = load_corpora(&args.corpora)?;
    let unlabeled = target.unlabeled();
    let mut trainer = match &resumed {
        Some(ck) => Trainer::from_checkpoint(ck, cfg.train.clone(), &source, &unlabeled)?,
        None => Trainer::new(cfg.train.clone(), &source, &unlabeled)?,
    };
    let evaluator = Evaluator::new(source.clone(), target.clone(), cfg.train.eval.clone(), cfg.train.seed)?;

    prepare_run_dir(&args.out, args.force)?;
    write_atomic(&args.out.join(CONFIG_FILE), cfg.to_pretty_json()?.as_bytes())?;
    let corpora = serde_json::json!({
        "source": {"path": args.corpora.join(SOURCE_FILE), "sha256": file_digest(&args.corpora.join(SOURCE_FILE))?},
        "target": {"path": args.corpora.join(TARGET_FILE), "sha256": file_digest(&args.corpora.join(TARGET_FILE))?},
        "resumed_from": args.resume,
    });
    write_atomic(
        &args.out.join(CORPORA_FILE),
        format!("{}\n", serde_json::to_string_pretty(&corpora)?).as_bytes(),
    )?;

    let metrics_path = args.out.join(METRICS_FILE);
    let mut metrics = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&metrics_path)
        .map_err(|e| Error::io(&metrics_path, e))?;
    let ck_dir = args.out.join(CHECKPOINT_DIR);
    let every = cfg.checkpoint_every;
    let mut on_eval = |r: &EvalReport, ck: &Checkpoint| -> Result<()> {
        writeln!(metrics, "{}", r.to_json_line()?).map_err(|e| Error::io(&metrics_path, e))?;
        metrics.flush().map_err(|e| Error::io(&metrics_path, e))?;
        if every > 0 && ck.step % every == 0 {
            let p = ck_dir.join(format!("step-{:06}.json", ck.step));
            write_atomic(&p, ck.to_json()?.as_bytes())?;
        }
        Ok(())
    };
    let reports = trainer.run(&evaluator, &mut on_eval)?;

    let final_checkpoint = ck_dir.join(FINAL_CHECKPOINT);
    write_atomic(&final_checkpoint, trainer.checkpoint().to_json()?.as_bytes())?;

    match reports.last() {
        Some(r) => say(out, &summary_table(r))?,
        None => say(out, &format!("nothing to do: checkpoint is already at step {}\n", trainer.step_count()))?,
    }
    Ok(TrainOutcome {
        run_dir: args.out.clone(),
        final_checkpoint,
        reports,
    })
}

/// Two-column rendering of one report.
pub fn summary_table(r: &EvalReport) -> String {
    let f = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into());
    let rows: Vec<(String, String)> = vec![
        ("step".into(), r.step.to_string()),
        ("mode".into(), r.mode.clone()),
        ("adversarial loss kind".into(), r.adv_loss.clone().unwrap_or_else(|| "-".into())),
        ("lambda".into(), f(r.lambda)),
        (format!("source nDCG@{}", r.ndcg_k), format!("{:.4}", r.source_ndcg)),
        (format!("target nDCG@{}", r.ndcg_k), format!("{:.4}", r.target_ndcg)),
        (format!("KNN-Source% (k={})", r.knn_k), format!("{:.2}", r.knn_source_pct)),
        ("Global Domain-Acc %".into(), f(r.global_domain_acc)),
        ("Local Domain-Acc %".into(), f(r.local_domain_acc)),
        ("ranking loss".into(), f(r.ranking_loss)),
        ("adversarial loss".into(), f(r.adversarial_loss)),
        ("discrimination loss".into(), f(r.discrimination_loss)),
    ];
    let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    let mut s = String::new();
    for (k, v) in rows {
        s.push_str(&format!("{k:<width$}  {v}\n"));
    }
    s
}

pub fn cmd_eval(args: &EvalArgs, out: &mut dyn Write) -> Result<EvalReport> {
    let ck = load_checkpoint(&args.checkpoint)?;
    let enc = ck.encoder()?;
    let (source, target) = load_corpora(&args.corpora)?;
    let mut eval_cfg = match &args.config {
        Some(p) => RunConfig::load(Some(p))?.train.eval,
        None => ck.config.eval.clone(),
    };
    if let Some(k) = args.k {
        eval_cfg.ndcg_k = k;
    }
    let seed = args.seed.unwrap_or(ck.config.seed);
    let dest = args.out.clone().unwrap_or_else(|| {
        args.checkpoint
            .with_file_name(format!("eval-step-{:06}.json", ck.step))
    });
    refuse_existing(&dest, args.force)?;

    let modir = ck.config.mode == Mode::Modir;
    let evaluator = Evaluator::new(source, target, eval_cfg, seed)?;
    let mut r = evaluator.evaluate(&enc, modir.then_some(&ck.classifier), ck.step)?;
    r.mode = ck.config.mode.as_str().to_string();
    if modir {
        r.adv_loss = Some(ck.config.adv_loss.as_str().to_string());
        r.lambda = Some(ck.config.lambda_for_step(ck.step.saturating_sub(1)));
    }
    let line = format!("{}\n", r.to_json_line()?);
    write_atomic(&dest, line.as_bytes())?;
    say(out, &line)?;
    Ok(r)
}

pub fn cmd_project(args: &ProjectArgs, out: &mut dyn Write) -> Result<usize> {
    let ck = load_checkpoint(&args.checkpoint)?;
    let enc = ck.encoder()?;
    let (source, target) = load_corpora(&args.corpora)?;
    refuse_existing(&args.out, args.force)?;

    let mut labels = Vec::new();
    let mut inputs = Vec::new();
    for c in [&source, &target] {
        for (role, records) in [("query", c.queries()), ("doc", c.documents())] {
            for rec in records {
                if rec.vector.len() != enc.input_dim() {
                    return Err(Error::Shape(format!(
                        "{} has dimension {}, encoder expects {}",
                        rec.id,
                        rec.vector.len(),
                        enc.input_dim()
                    )));
                }
                labels.push((rec.id.as_str(), role, c.domain().as_str()));
                inputs.push(rec.clone());
            }
        }
    }
    let embeddings = crate::retrieval::embed_all(&enc, &inputs);
    let coords = project::pca_2d(&embeddings)?;

    let mut csv = String::from("id,role,domain,pc1,pc2\n");
    for ((id, role, domain), [a, b]) in labels.iter().zip(&coords) {
        csv.push_str(&format!("{id},{role},{domain},{a},{b}\n"));
    }
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    write_atomic(&args.out, csv.as_bytes())?;
    say(out, &format!("wrote {} points to {}\n", coords.len(), args.out.display()))?;
    Ok(coords.len())
}

pub fn cmd_report(args: &ReportArgs, out: &mut dyn Write) -> Result<(PathBuf, PathBuf)> {
    let reports = report::read_metrics(&args.run.join(METRICS_FILE))?;
    let (acc, inv) = report::tables(&reports)?;
    let dir = args.out.clone().unwrap_or_else(|| args.run.clone());
    let paths = (dir.join(report::DOMAIN_ACC_CSV), dir.join(report::INVARIANCE_CSV));
    if args.out.is_some() {
        refuse_existing(&paths.0, args.force)?;
        refuse_existing(&paths.1, args.force)?;
    }
    create_dir(&dir)?;
    write_atomic(&paths.0, acc.as_bytes())?;
    write_atomic(&paths.1, inv.as_bytes())?;
    say(
        out,
        &format!(
            "{} evaluation points\nwrote {}\nwrote {}\n",
            reports.len(),
            paths.0.display(),
            paths.1.display()
        ),
    )?;
    Ok(paths)
}

pub fn cmd_defaults(args: &DefaultsArgs, out: &mut dyn Write) -> Result<()> {
    let mut cfg = RunConfig::load(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        cfg.generate.seed = seed;
        cfg.train.seed = seed;
    }
    let text = cfg.to_pretty_json()?;
    match &args.out {
        Some(path) => {
            refuse_existing(path, args.force)?;
            write_atomic(path, text.as_bytes())?;
            say(out, &format!("wrote {}\n", path.display()))
        }
        None => say(out, &text),
    }
}
