//! Command-line surface: generate synthetic stores, clean text, train,
//! evaluate, inspect stores, and dump group statistics.
//!
//! Every command is deterministic given its config (seed included). Exit
//! codes: 0 success, 2 config/validation, 3 numeric failure during training,
//! 4 I/O.

use std::collections::BTreeSet;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Parser, Subcommand};

use crate::config::RunConfigFile;
use crate::dataset::{clean_text, load_store, write_store, EmbeddingStore, StoreFormat};
use crate::dro::DroMode;
use crate::error::{Error, Result};
use crate::models::MamlOrder;
use crate::synth;
use crate::trainer::{
    export_metrics, import_metrics, meta_test, meta_train, MetricsFormat, MetricsRecord,
    ModelState, METRICS_CSV_HEADER,
};

#[derive(Parser)]
#[command(name = "metadro", about = "Group-robust few-shot meta-learning over embeddings")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic grouped-shift embedding store.
    GenSynth {
        /// Run config TOML; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output store path.
        #[arg(long)]
        out: PathBuf,
        /// Store format: csv, jsonl, or bin (default: from extension).
        #[arg(long)]
        format: Option<String>,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Meta-train a model and write a checkpoint plus metrics history.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Input embedding store.
        #[arg(long)]
        store: PathBuf,
        /// Output checkpoint path.
        #[arg(long)]
        out: PathBuf,
        /// Metrics history path (.csv for CSV, anything else for JSONL).
        #[arg(long)]
        metrics: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Objective: erm, dro, or adjusted.
        #[arg(long)]
        mode: Option<String>,
        /// L2 penalty coefficient λ.
        #[arg(long)]
        l2: Option<f64>,
        /// MAML order: first or second.
        #[arg(long)]
        order: Option<String>,
    },
    /// Evaluate a checkpoint on freshly sampled episodes.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Number of evaluation tasks T (minimum 2).
        #[arg(long)]
        tasks: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Optional metrics file to write the record to.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        order: Option<String>,
    },
    /// Print class and group count tables for a store.
    Inspect {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        format: Option<String>,
    },
    /// Clean text line by line: lowercase, strip punctuation, drop
    /// stopwords, truncate to a token budget.
    CleanText {
        /// Input text file, one document per line.
        input: PathBuf,
        /// Stopword list, one word per line.
        #[arg(long)]
        stopwords: Option<PathBuf>,
        #[arg(long, default_value_t = 200)]
        max_tokens: usize,
        /// Output path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Dump per-group statistics from a metrics history as CSV.
    DumpGroups {
        /// Metrics history in JSONL form (as written by train).
        #[arg(long)]
        metrics: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_config(path: &Option<PathBuf>) -> Result<RunConfigFile> {
    match path {
        Some(p) => RunConfigFile::load(p),
        None => Ok(RunConfigFile::default()),
    }
}

fn store_format(path: &Path, flag: &Option<String>) -> Result<StoreFormat> {
    match flag {
        Some(f) => StoreFormat::from_str(f),
        None => Ok(StoreFormat::from_path(path)),
    }
}

fn metrics_format(path: &Path) -> MetricsFormat {
    match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => MetricsFormat::Csv,
        _ => MetricsFormat::Json,
    }
}

fn load_any_store(path: &Path, flag: &Option<String>) -> Result<EmbeddingStore> {
    load_store(path, store_format(path, flag)?)
}

fn apply_overrides(
    cfg: &mut RunConfigFile,
    seed: Option<u64>,
    mode: &Option<String>,
    l2: Option<f64>,
    order: &Option<String>,
) -> Result<()> {
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(m) = mode {
        DroMode::from_str(m)?;
        cfg.mode = m.clone();
    }
    if let Some(l) = l2 {
        cfg.l2_coeff = l;
    }
    if let Some(o) = order {
        MamlOrder::from_str(o)?;
        cfg.maml_order = o.clone();
    }
    Ok(())
}

fn write_or_stdout(out: &Option<PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(Error::from),
        None => {
            print!("{}", text);
            std::io::stdout().flush()?;
            Ok(())
        }
    }
}

/// Parse `args` and run the selected command. The binary maps the returned
/// error to an exit code.
pub fn run<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::parse_from(args);
    match cli.command {
        Command::GenSynth { config, out, format, seed } => {
            let mut cfg = load_config(&config)?;
            apply_overrides(&mut cfg, seed, &None, None, &None)?;
            let store = synth::generate(&cfg.to_synth_spec())?;
            write_store(&store, &out, store_format(&out, &format)?)?;
            println!(
                "wrote {} records ({} classes, {} groups) to {}",
                store.len(),
                store.class_counts().len(),
                store.group_counts().len(),
                out.display()
            );
            Ok(())
        }
        Command::Train { config, store, out, metrics, seed, mode, l2, order } => {
            let mut cfg = load_config(&config)?;
            apply_overrides(&mut cfg, seed, &mode, l2, &order)?;
            let train_cfg = cfg.to_train_config()?;
            let data = load_any_store(&store, &None)?;
            let outcome = meta_train(&train_cfg, &data, |rec: &MetricsRecord| {
                println!(
                    "iter {} avg {:.4} worst {:.4} (group {}) best {:.4} (group {})",
                    rec.iteration, rec.avg, rec.worst, rec.worst_group, rec.best, rec.best_group
                );
            })?;
            outcome.model.save(&out)?;
            if let Some(mpath) = &metrics {
                export_metrics(&outcome.history, mpath, metrics_format(mpath))?;
            }
            let last = outcome.history.last().expect("meta_train always evaluates at least once");
            println!("{}", last.format_summary_row());
            Ok(())
        }
        Command::Eval { checkpoint, store, config, tasks, seed, out, order } => {
            let mut cfg = load_config(&config)?;
            apply_overrides(&mut cfg, seed, &None, None, &order)?;
            let train_cfg = cfg.to_train_config()?;
            let t = tasks.unwrap_or(train_cfg.eval_tasks);
            if t < 2 {
                return Err(Error::Validation("--tasks must be >= 2".into()));
            }
            let data = load_any_store(&store, &None)?;
            let mut model = ModelState::from_config(&train_cfg, data.dim())?;
            model.load(&checkpoint)?;
            let mut record = meta_test(&model, &train_cfg, &data, t, cfg.seed)?;
            record.iteration = train_cfg.meta_iterations;
            println!("{}", METRICS_CSV_HEADER);
            println!("{}", record.to_csv_row().join(","));
            if let Some(p) = &out {
                export_metrics(&[record], p, metrics_format(p))?;
            }
            Ok(())
        }
        Command::Inspect { store, format } => {
            let data = load_any_store(&store, &format)?;
            println!("records: {}", data.len());
            println!("dim: {}", data.dim());
            println!("classes:");
            for (label, count) in data.class_counts() {
                println!("  {} {}", label, count);
            }
            println!("groups:");
            for (group, count) in data.group_counts() {
                println!("  {} {}", group, count);
            }
            Ok(())
        }
        Command::CleanText { input, stopwords, max_tokens, out } => {
            let stops: BTreeSet<String> = match &stopwords {
                Some(p) => std::fs::read_to_string(p)?
                    .lines()
                    .map(|l| l.trim().to_lowercase())
                    .filter(|l| !l.is_empty())
                    .collect(),
                None => BTreeSet::new(),
            };
            let file = std::fs::File::open(&input)?;
            let mut cleaned = String::new();
            for line in std::io::BufReader::new(file).lines() {
                cleaned.push_str(&clean_text(&line?, &stops, max_tokens));
                cleaned.push('\n');
            }
            write_or_stdout(&out, &cleaned)
        }
        Command::DumpGroups { metrics, out } => {
            let history = import_metrics(&metrics, MetricsFormat::Json)?;
            let last = history
                .last()
                .ok_or_else(|| Error::Validation("metrics history is empty".into()))?;
            if last.groups.is_empty() {
                return Err(Error::Validation(
                    "metrics history carries no group snapshots (CSV export drops them; use the JSONL history)"
                        .into(),
                ));
            }
            let mut text = String::from("group,n,mean_loss\n");
            for g in &last.groups {
                text.push_str(&format!("{},{},{}\n", g.group, g.n, g.mean_loss));
            }
            write_or_stdout(&out, &text)
        }
    }
}
