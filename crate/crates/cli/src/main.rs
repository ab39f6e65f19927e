//! `radsum`: corpus preparation and ROUGE evaluation for radiology report
//! summarization.

mod commands;
mod config;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use radsum_core::augment::ShuffleMode;
use radsum_core::ingest::{LabelValue, SectionName};
use radsum_core::loss::Reduction;
use radsum_core::rouge::{Component, Metric};

use crate::config::{BaselineMode, RunConfig};

#[derive(Debug, Parser)]
#[command(
    name = "radsum",
    version,
    about = "Radiology report summarization toolkit"
)]
struct Cli {
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root seed for every randomized step.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Exit non-zero and skip the output if any record fails.
    #[arg(long, global = true)]
    strict: bool,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Primary output file; stdout when omitted.
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,
    /// Where to write the JSON run summary; stderr when omitted.
    #[arg(long, global = true)]
    summary: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse raw reports into sectioned JSONL records.
    Parse(ParseArgs),
    /// Keep reports that have IMPRESSION plus every required field.
    Filter(FilterArgs),
    /// Seeded train/test split of report ids.
    Split(SplitArgs),
    /// Expand reports into per-epoch training pairs.
    Augment(AugmentArgs),
    /// Pad and batch training pairs for teacher forcing.
    Collate(CollateArgs),
    /// Token-length statistics per field.
    Stats(StatsArgs),
    /// ROUGE scores for candidate/reference pairs.
    Score(ScoreArgs),
    /// Mean scores per disease label stratum.
    Stratify(StratifyArgs),
    /// Produce baseline predictions.
    Baseline(BaselineArgs),
    /// Embedding-distance and cross-entropy losses for one sequence.
    Loss(LossArgs),
}

#[derive(Debug, Args)]
struct ParseArgs {
    /// Directory of `.txt` reports, or JSONL of `{report_id, text}`.
    input: PathBuf,
    /// Label metadata CSV.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Id column of the labels CSV.
    #[arg(long)]
    id_column: Option<String>,
    /// Only recognise headers at the start of a line.
    #[arg(long)]
    no_inline_headers: bool,
}

#[derive(Debug, Args)]
struct FilterArgs {
    /// Reports JSONL.
    input: PathBuf,
    /// Required input fields (IMPRESSION is always required).
    #[arg(long, value_delimiter = ',')]
    require: Option<Vec<SectionName>>,
}

#[derive(Debug, Args)]
struct SplitArgs {
    /// Reports JSONL.
    input: PathBuf,
    /// Fraction of reports assigned to train.
    #[arg(long)]
    ratio: Option<f64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Subset {
    Train,
    Test,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    PerEpoch,
    PerExample,
}

impl From<ModeArg> for ShuffleMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::PerEpoch => ShuffleMode::PerEpoch,
            ModeArg::PerExample => ShuffleMode::PerExample,
        }
    }
}

#[derive(Debug, Args)]
struct AugmentArgs {
    /// Reports JSONL.
    input: PathBuf,
    #[arg(long)]
    epochs: Option<usize>,
    /// First epoch that uses shuffled field order.
    #[arg(long)]
    shuffle_start: Option<usize>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Input fields in canonical order.
    #[arg(long, value_delimiter = ',')]
    fields: Option<Vec<SectionName>>,
    /// Text placed between rendered fields.
    #[arg(long)]
    separator: Option<String>,
    /// Split manifest from `radsum split`.
    #[arg(long, requires = "subset")]
    manifest: Option<PathBuf>,
    #[arg(long, value_enum, requires = "manifest")]
    subset: Option<Subset>,
    /// Also write the permutation schedule as JSON.
    #[arg(long)]
    schedule_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CollateArgs {
    /// Training pairs JSONL from `radsum augment`.
    input: PathBuf,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    max_input_len: Option<usize>,
    #[arg(long)]
    max_target_len: Option<usize>,
}

#[derive(Debug, Args)]
struct StatsArgs {
    /// Reports JSONL.
    input: PathBuf,
    #[arg(long, value_delimiter = ',')]
    fields: Option<Vec<SectionName>>,
    /// Write a histogram of combined lengths as CSV.
    #[arg(long)]
    histogram: Option<PathBuf>,
    #[arg(long)]
    bin_width: Option<usize>,
}

#[derive(Debug, Args)]
struct ScoreArgs {
    /// Predictions JSONL of `{pair_id, candidate, reference}`.
    input: PathBuf,
    /// Bootstrap resamples for 95% intervals.
    #[arg(long)]
    bootstrap: Option<usize>,
    /// Keep punctuation tokens when scoring.
    #[arg(long)]
    keep_punctuation: bool,
    /// Multiplier for reported scores (1 gives fractions).
    #[arg(long)]
    scale: Option<f64>,
    /// Also write per-pair scores as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct StratifyArgs {
    /// Score report JSON from `radsum score`.
    scores: PathBuf,
    /// Reports JSONL carrying labels.
    #[arg(long)]
    reports: PathBuf,
    /// Label polarities that form strata.
    #[arg(long, value_delimiter = ',')]
    polarity: Option<Vec<LabelValue>>,
    /// Leave out the synthetic No Findings stratum.
    #[arg(long)]
    no_findings_stratum_off: bool,
    #[arg(long)]
    metric: Option<Metric>,
    #[arg(long)]
    component: Option<Component>,
    /// Also write the strata table as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BaselineArgs {
    /// Reports JSONL.
    input: PathBuf,
    #[arg(long, value_enum)]
    mode: Option<BaselineMode>,
    /// Output of the canonical baseline.
    #[arg(long)]
    phrase: Option<String>,
    /// Sentences kept by the extractive baseline.
    #[arg(long)]
    k: Option<usize>,
    /// Only emit pairs for No Findings reports.
    #[arg(long)]
    no_findings_only: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ReductionArg {
    Sum,
    Mean,
}

#[derive(Debug, Args)]
struct LossArgs {
    /// JSON `{reference: [word], distributions: [[p]]}`.
    input: PathBuf,
    /// Embedding table, one `word v1 .. vd` per line.
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long, value_enum)]
    reduction: Option<ReductionArg>,
}

/// Applies flag overrides on top of the loaded configuration.
fn resolve(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.strict |= cli.strict;
    if let Some(t) = cli.threads {
        cfg.threads = t;
    }
    match &cli.command {
        Command::Parse(a) => {
            if let Some(col) = &a.id_column {
                cfg.parse.id_column = col.clone();
            }
            if a.no_inline_headers {
                cfg.parse.parser.inline_headers = false;
            }
        }
        Command::Filter(a) => {
            if let Some(f) = &a.require {
                cfg.filter.required_fields = f.clone();
            }
        }
        Command::Split(a) => {
            if let Some(r) = a.ratio {
                cfg.split.ratio = r;
            }
        }
        Command::Augment(a) => {
            let aug = &mut cfg.augment;
            if let Some(e) = a.epochs {
                aug.epochs = e;
            }
            if a.shuffle_start.is_some() {
                aug.shuffle_start = a.shuffle_start;
            }
            if let Some(m) = a.mode {
                aug.mode = m.into();
            }
            if let Some(f) = &a.fields {
                aug.fields = f.clone();
            }
            if let Some(s) = &a.separator {
                aug.template.separator = s.clone();
            }
        }
        Command::Collate(a) => {
            let c = &mut cfg.collate;
            if let Some(b) = a.batch_size {
                c.batch_size = b;
            }
            if let Some(n) = a.max_input_len {
                c.max_input_len = n;
            }
            if let Some(n) = a.max_target_len {
                c.max_target_len = n;
            }
        }
        Command::Stats(a) => {
            if let Some(f) = &a.fields {
                cfg.stats.fields = f.clone();
            }
            if let Some(b) = a.bin_width {
                cfg.stats.histogram_bin = b;
            }
        }
        Command::Score(a) => {
            if let Some(b) = a.bootstrap {
                cfg.score.bootstrap = b;
            }
            cfg.score.keep_punctuation |= a.keep_punctuation;
            if let Some(s) = a.scale {
                cfg.score.scale = s;
            }
        }
        Command::Stratify(a) => {
            let s = &mut cfg.stratify;
            if let Some(p) = &a.polarity {
                s.spec.polarities = p.clone();
            }
            if a.no_findings_stratum_off {
                s.spec.no_findings_stratum = false;
            }
            if let Some(m) = a.metric {
                s.metric = m;
            }
            if let Some(c) = a.component {
                s.component = c;
            }
        }
        Command::Baseline(a) => {
            let b = &mut cfg.baseline;
            if let Some(m) = a.mode {
                b.mode = m;
            }
            if let Some(p) = &a.phrase {
                b.phrase = p.clone();
            }
            if let Some(k) = a.k {
                b.k = k;
            }
            b.no_findings_only |= a.no_findings_only;
        }
        Command::Loss(a) => {
            if let Some(r) = a.reduction {
                cfg.loss.reduction = match r {
                    ReductionArg::Sum => Reduction::Sum,
                    ReductionArg::Mean => Reduction::Mean,
                };
            }
        }
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<bool> {
    let cfg = resolve(&cli)?;
    if cfg.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build_global()
            .context("configuring thread pool")?;
    }
    let out = cli.output.as_deref();
    let (name, outcome) = match &cli.command {
        Command::Parse(a) => (
            "parse",
            commands::parse(&cfg, &a.input, a.labels.as_deref(), out)?,
        ),
        Command::Filter(a) => ("filter", commands::filter(&cfg, &a.input, out)?),
        Command::Split(a) => ("split", commands::split(&cfg, &a.input, out)?),
        Command::Augment(a) => {
            let subset = a
                .manifest
                .as_deref()
                .zip(a.subset.map(|s| matches!(s, Subset::Train)));
            (
                "augment",
                commands::augment(&cfg, &a.input, subset, a.schedule_out.as_deref(), out)?,
            )
        }
        Command::Collate(a) => ("collate", commands::collate(&cfg, &a.input, out)?),
        Command::Stats(a) => (
            "stats",
            commands::stats(&cfg, &a.input, a.histogram.as_deref(), out)?,
        ),
        Command::Score(a) => (
            "score",
            commands::score(&cfg, &a.input, a.csv.as_deref(), out)?,
        ),
        Command::Stratify(a) => (
            "stratify",
            commands::stratify(&cfg, &a.scores, &a.reports, a.csv.as_deref(), out)?,
        ),
        Command::Baseline(a) => ("baseline", commands::baseline(&cfg, &a.input, out)?),
        Command::Loss(a) => ("loss", commands::loss(&cfg, &a.input, &a.embeddings, out)?),
    };
    let ok = !outcome.aborted;
    commands::write_summary(name, &cfg, &outcome, cli.summary.as_deref())?;
    Ok(ok)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            log::error!("strict mode: run aborted because of record failures");
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
