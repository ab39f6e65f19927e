use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context, Result};
use radsum_core::augment::{expand_corpus, make_schedule, EpochPair, ErrorPolicy, ExamplePair};
use radsum_core::dataset::{self, CollateConfig, SplitResult};
use radsum_core::evaluation::{
    self, canonical_baseline, count_score_correlation, extractive_baseline, StratumReport,
};
use radsum_core::ingest::{
    extract_labels, is_no_findings, read_labels_csv, RadiologyReport, ReportParser, SectionName,
};
use radsum_core::loss::{
    cross_entropy_loss, embedding_distance_loss, EmbeddingTable, PredictedDistribution,
};
use radsum_core::rouge::{
    score_pairs, BootstrapConfig, Component, Interval, Metric, MetricInterval, PairScores,
    PredictionRecord, ScoreInterval, ScoreSet, ScoringOptions,
};
use radsum_core::VERSION;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::{BaselineMode, RunConfig};
use crate::io::{open_output, read_json, read_jsonl, write_json, write_jsonl};

#[derive(Debug, Clone, Serialize)]
pub struct Failure {
    pub id: String,
    pub error: String,
}

/// What a command did, for the run summary.
#[derive(Debug, Default)]
pub struct Outcome {
    pub records_in: usize,
    pub records_out: usize,
    pub failures: Vec<Failure>,
    pub details: Value,
    /// Strict mode hit a failure; nothing was written.
    pub aborted: bool,
}

impl Outcome {
    fn new(records_in: usize, failures: Vec<Failure>) -> Self {
        Self {
            records_in,
            failures,
            details: Value::Null,
            ..Self::default()
        }
    }

    /// In strict mode any failure aborts before output is written.
    fn must_abort(&mut self, cfg: &RunConfig) -> bool {
        for f in &self.failures {
            log::warn!("{}: {}", f.id, f.error);
        }
        self.aborted = cfg.strict && !self.failures.is_empty();
        self.aborted
    }
}

#[derive(Serialize)]
struct RunSummary<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    status: &'static str,
    records_in: usize,
    records_out: usize,
    failure_count: usize,
    failures: &'a [Failure],
    details: &'a Value,
    config: &'a RunConfig,
}

pub fn write_summary(
    command: &str,
    cfg: &RunConfig,
    outcome: &Outcome,
    path: Option<&Path>,
) -> Result<()> {
    let summary = RunSummary {
        tool: "radsum",
        version: VERSION,
        command,
        status: if outcome.aborted { "aborted" } else { "ok" },
        records_in: outcome.records_in,
        records_out: outcome.records_out,
        failure_count: outcome.failures.len(),
        failures: &outcome.failures,
        details: &outcome.details,
        config: cfg,
    };
    match path {
        Some(p) => {
            let mut f = File::create(p).with_context(|| format!("creating {}", p.display()))?;
            write_json(&mut f, &summary)
        }
        None => {
            let mut err = std::io::stderr().lock();
            serde_json::to_writer(&mut err, &summary)?;
            writeln!(err)?;
            Ok(())
        }
    }
}

#[derive(Deserialize)]
struct RawReport {
    report_id: String,
    #[serde(alias = "raw_text")]
    text: String,
}

fn load_raw(input: &Path) -> Result<Vec<RawReport>> {
    if !input.is_dir() {
        return read_jsonl(input);
    }
    let mut paths: Vec<_> = std::fs::read_dir(input)
        .with_context(|| format!("listing {}", input.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()?;
    paths.retain(|p| p.is_file() && p.extension().is_some_and(|e| e == "txt"));
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let text =
                std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
            let report_id = p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            Ok(RawReport { report_id, text })
        })
        .collect()
}

pub fn parse(
    cfg: &RunConfig,
    input: &Path,
    labels: Option<&Path>,
    out: Option<&Path>,
) -> Result<Outcome> {
    let raw = load_raw(input)?;
    let table = match labels {
        Some(p) => {
            let f = File::open(p).with_context(|| format!("opening {}", p.display()))?;
            Some(read_labels_csv(f, &cfg.parse.id_column)?)
        }
        None => None,
    };
    let parser = ReportParser::new(&cfg.parse.parser);
    let results: Vec<_> = raw
        .par_iter()
        .map(|r| {
            let report = parser.parse(&r.report_id, &r.text)?;
            match table.as_ref().and_then(|t| t.get(&r.report_id)) {
                Some(row) => extract_labels(report, row),
                None => Ok(report),
            }
        })
        .collect();
    let mut reports = Vec::with_capacity(raw.len());
    let mut failures = Vec::new();
    for (r, result) in raw.iter().zip(results) {
        match result {
            Ok(rep) => reports.push(rep),
            Err(e) => failures.push(Failure {
                id: r.report_id.clone(),
                error: e.to_string(),
            }),
        }
    }
    let mut outcome = Outcome::new(raw.len(), failures);
    let unlabeled = table.as_ref().map(|t| {
        reports
            .iter()
            .filter(|r| !t.contains_key(&r.report_id))
            .count()
    });
    outcome.details = json!({ "without_label_row": unlabeled });
    if outcome.must_abort(cfg) {
        return Ok(outcome);
    }
    write_jsonl(&mut *open_output(out)?, &reports)?;
    outcome.records_out = reports.len();
    Ok(outcome)
}

pub fn filter(cfg: &RunConfig, input: &Path, out: Option<&Path>) -> Result<Outcome> {
    let corpus: Vec<RadiologyReport> = read_jsonl(input)?;
    let (kept, report) = dataset::filter_complete(corpus, &cfg.filter.required_fields);
    write_jsonl(&mut *open_output(out)?, &kept)?;
    let mut outcome = Outcome::new(report.total, Vec::new());
    outcome.records_out = kept.len();
    outcome.details = serde_json::to_value(&report)?;
    Ok(outcome)
}

pub fn split(cfg: &RunConfig, input: &Path, out: Option<&Path>) -> Result<Outcome> {
    let corpus: Vec<RadiologyReport> = read_jsonl(input)?;
    let ids: Vec<String> = corpus.into_iter().map(|r| r.report_id).collect();
    let result = dataset::split(&ids, cfg.split.ratio, cfg.seed)?;
    write_json(&mut *open_output(out)?, &result)?;
    let mut outcome = Outcome::new(ids.len(), Vec::new());
    outcome.records_out = ids.len();
    outcome.details = json!({ "train": result.train_ids.len(), "test": result.test_ids.len() });
    Ok(outcome)
}

/// `subset` is the manifest path plus whether to keep the train side.
pub fn augment(
    cfg: &RunConfig,
    input: &Path,
    subset: Option<(&Path, bool)>,
    schedule_out: Option<&Path>,
    out: Option<&Path>,
) -> Result<Outcome> {
    let mut corpus: Vec<RadiologyReport> = read_jsonl(input)?;
    let records_in = corpus.len();
    if let Some((path, train)) = subset {
        let manifest: SplitResult = read_json(path)?;
        let ids = if train {
            manifest.train_ids
        } else {
            manifest.test_ids
        };
        let keep: HashSet<String> = ids.into_iter().collect();
        corpus.retain(|r| keep.contains(&r.report_id));
    }
    let aug = &cfg.augment;
    let schedule = make_schedule(
        aug.fields.clone(),
        aug.epochs,
        aug.resolved_shuffle_start(),
        cfg.seed,
        aug.mode,
    )?;
    if let Some(p) = schedule_out {
        let mut f = File::create(p).with_context(|| format!("creating {}", p.display()))?;
        write_json(&mut f, &schedule)?;
    }
    let expansion = expand_corpus(&corpus, &schedule, &aug.template, ErrorPolicy::SkipAndLog)?;
    let failures = expansion
        .skipped
        .iter()
        .map(|s| Failure {
            id: format!("{}@{}", s.pair_id, s.epoch),
            error: s.error.clone(),
        })
        .collect();
    let mut outcome = Outcome::new(records_in, failures);
    outcome.details = json!({
        "selected_reports": corpus.len(),
        "epochs": schedule.epochs,
        "shuffle_start": schedule.shuffle_start,
    });
    if outcome.must_abort(cfg) {
        return Ok(outcome);
    }
    write_jsonl(&mut *open_output(out)?, &expansion.pairs)?;
    outcome.records_out = expansion.pairs.len();
    Ok(outcome)
}

#[derive(Serialize)]
struct BatchRecord {
    epoch: usize,
    batch: usize,
    #[serde(flatten)]
    data: dataset::CollatedBatch,
}

pub fn collate(cfg: &RunConfig, input: &Path, out: Option<&Path>) -> Result<Outcome> {
    let pairs: Vec<EpochPair> = read_jsonl(input)?;
    let c = &cfg.collate;
    if c.batch_size == 0 {
        bail!("batch size must be at least 1");
    }
    let collate_cfg = CollateConfig {
        max_input_len: c.max_input_len,
        max_target_len: c.max_target_len,
        markers: c.markers.clone(),
        normalization: cfg.normalization,
    };
    // Batches never straddle an epoch boundary.
    let mut chunks: Vec<(usize, &[EpochPair])> = Vec::new();
    let mut start = 0;
    while start < pairs.len() {
        let epoch = pairs[start].epoch;
        let mut end = start;
        while end < pairs.len() && end - start < c.batch_size && pairs[end].epoch == epoch {
            end += 1;
        }
        chunks.push((epoch, &pairs[start..end]));
        start = end;
    }
    let batches: Vec<BatchRecord> = chunks
        .par_iter()
        .enumerate()
        .map(|(batch, (epoch, chunk))| {
            let examples: Vec<ExamplePair> = chunk
                .iter()
                .map(|p| ExamplePair {
                    pair_id: p.pair_id.clone(),
                    input_text: p.input.clone(),
                    target_text: p.target.clone(),
                })
                .collect();
            dataset::collate(&examples, &collate_cfg).map(|data| BatchRecord {
                epoch: *epoch,
                batch,
                data,
            })
        })
        .collect::<Result<_, _>>()?;
    write_jsonl(&mut *open_output(out)?, &batches)?;
    let mut outcome = Outcome::new(pairs.len(), Vec::new());
    outcome.records_out = batches.len();
    outcome.details = json!({
        "batches": batches.len(),
        "truncated_inputs": batches.iter().map(|b| b.data.truncated_inputs).sum::<usize>(),
        "truncated_targets": batches.iter().map(|b| b.data.truncated_targets).sum::<usize>(),
    });
    Ok(outcome)
}

pub fn stats(
    cfg: &RunConfig,
    input: &Path,
    histogram: Option<&Path>,
    out: Option<&Path>,
) -> Result<Outcome> {
    let corpus: Vec<RadiologyReport> = read_jsonl(input)?;
    let stats = dataset::corpus_stats(&corpus, &cfg.stats.fields, &cfg.normalization);
    if let Some(p) = histogram {
        let mut w =
            csv::Writer::from_path(p).with_context(|| format!("creating {}", p.display()))?;
        w.write_record(["bin_start", "count"])?;
        for (bin, count) in dataset::histogram(&stats.combined_values, cfg.stats.histogram_bin) {
            w.write_record([bin.to_string(), count.to_string()])?;
        }
        w.flush()?;
    }
    write_json(&mut *open_output(out)?, &stats)?;
    let mut outcome = Outcome::new(corpus.len(), Vec::new());
    outcome.records_out = 1;
    Ok(outcome)
}

/// Score report as written by `radsum score`.
#[derive(Debug, Serialize, Deserialize)]
struct ScoreOutput {
    scale: f64,
    per_pair: Vec<PairScores>,
    aggregate: ScoreSet,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    intervals: Option<Vec<MetricInterval>>,
}

fn scale_interval(i: Interval, k: f64) -> Interval {
    Interval {
        lower: i.lower * k,
        upper: i.upper * k,
    }
}

pub fn score(
    cfg: &RunConfig,
    input: &Path,
    csv_out: Option<&Path>,
    out: Option<&Path>,
) -> Result<Outcome> {
    let records: Vec<PredictionRecord> = read_jsonl(input)?;
    if records.is_empty() {
        bail!("no prediction records in {}", input.display());
    }
    let opts = ScoringOptions {
        normalization: cfg.normalization,
        sentences: cfg.sentences.clone(),
        keep_punctuation: cfg.score.keep_punctuation,
    };
    let bootstrap = (cfg.score.bootstrap > 0).then_some(BootstrapConfig {
        resamples: cfg.score.bootstrap,
        seed: cfg.seed,
    });
    let report = score_pairs(&records, &opts, bootstrap.as_ref())?;
    let k = cfg.score.scale;
    let output = ScoreOutput {
        scale: k,
        per_pair: report
            .per_pair
            .into_iter()
            .map(|p| PairScores {
                pair_id: p.pair_id,
                scores: p.scores.scaled(k),
            })
            .collect(),
        aggregate: report.aggregate.scaled(k),
        intervals: report.intervals.map(|v| {
            v.into_iter()
                .map(|m| MetricInterval {
                    metric: m.metric,
                    interval: ScoreInterval {
                        precision: scale_interval(m.interval.precision, k),
                        recall: scale_interval(m.interval.recall, k),
                        f1: scale_interval(m.interval.f1, k),
                    },
                })
                .collect()
        }),
    };
    if let Some(p) = csv_out {
        let mut w =
            csv::Writer::from_path(p).with_context(|| format!("creating {}", p.display()))?;
        let mut header = vec!["pair_id".to_string()];
        for m in Metric::ALL {
            for c in ["p", "r", "f1"] {
                header.push(format!("{}_{c}", m.name()));
            }
        }
        w.write_record(&header)?;
        for p in &output.per_pair {
            let mut row = vec![p.pair_id.clone()];
            for m in Metric::ALL {
                let s = p.scores.get(m);
                row.extend([s.precision, s.recall, s.f1].map(|v| v.to_string()));
            }
            w.write_record(&row)?;
        }
        w.flush()?;
    }
    write_json(&mut *open_output(out)?, &output)?;
    let mut outcome = Outcome::new(records.len(), Vec::new());
    outcome.records_out = output.per_pair.len();
    outcome.details = json!({ "aggregate": output.aggregate });
    Ok(outcome)
}

#[derive(Serialize)]
struct StratifyOutput<'a> {
    scale: f64,
    metric: Metric,
    component: Component,
    /// Pearson r between stratum size and mean score; null when undefined.
    correlation: Option<f64>,
    strata: &'a [StratumReport],
}

pub fn stratify(
    cfg: &RunConfig,
    scores: &Path,
    reports: &Path,
    csv_out: Option<&Path>,
    out: Option<&Path>,
) -> Result<Outcome> {
    let scored: ScoreOutput = read_json(scores)?;
    let corpus: Vec<RadiologyReport> = read_jsonl(reports)?;
    let by_id: HashMap<&str, &RadiologyReport> =
        corpus.iter().map(|r| (r.report_id.as_str(), r)).collect();
    let mut items = Vec::with_capacity(scored.per_pair.len());
    let mut failures = Vec::new();
    for p in &scored.per_pair {
        match by_id.get(p.pair_id.as_str()) {
            Some(r) => items.push((*r, p.scores)),
            None => failures.push(Failure {
                id: p.pair_id.clone(),
                error: "no report with this id".into(),
            }),
        }
    }
    let mut outcome = Outcome::new(scored.per_pair.len(), failures);
    if outcome.must_abort(cfg) {
        return Ok(outcome);
    }
    let s = &cfg.stratify;
    let strata = evaluation::stratify(&items, &s.spec);
    let correlation = count_score_correlation(&strata, s.metric, s.component);
    if let Err(e) = &correlation {
        log::warn!("correlation unavailable: {e}");
    }
    if let Some(p) = csv_out {
        let mut w =
            csv::Writer::from_path(p).with_context(|| format!("creating {}", p.display()))?;
        w.write_record(["disease", "polarity", "n", "mean_p", "mean_r", "mean_f1"])?;
        for st in &strata {
            let m = st.mean_scores.get(s.metric);
            w.write_record([
                st.disease.clone(),
                st.polarity.clone().unwrap_or_default(),
                st.n_examples.to_string(),
                m.precision.to_string(),
                m.recall.to_string(),
                m.f1.to_string(),
            ])?;
        }
        w.flush()?;
    }
    let body = StratifyOutput {
        scale: scored.scale,
        metric: s.metric,
        component: s.component,
        correlation: correlation.as_ref().ok().copied(),
        strata: &strata,
    };
    write_json(&mut *open_output(out)?, &body)?;
    outcome.records_out = strata.len();
    outcome.details = json!({ "strata": strata.len(), "correlation": correlation.ok() });
    Ok(outcome)
}

pub fn baseline(cfg: &RunConfig, input: &Path, out: Option<&Path>) -> Result<Outcome> {
    let corpus: Vec<RadiologyReport> = read_jsonl(input)?;
    let b = &cfg.baseline;
    let selected: Vec<&RadiologyReport> = corpus
        .iter()
        .filter(|r| !b.no_findings_only || is_no_findings(r, &b.no_finding_key))
        .collect();
    let mut predictions = Vec::with_capacity(selected.len());
    let mut failures = Vec::new();
    for r in &selected {
        let Some(reference) = r.section(&SectionName::Impression) else {
            failures.push(Failure {
                id: r.report_id.clone(),
                error: "no IMPRESSION section".into(),
            });
            continue;
        };
        let candidate = match b.mode {
            BaselineMode::Canonical => Ok(canonical_baseline(r, &b.phrase)),
            BaselineMode::Extractive => extractive_baseline(r, b.k, &cfg.sentences),
        };
        match candidate {
            Ok(candidate) => predictions.push(PredictionRecord {
                pair_id: r.report_id.clone(),
                candidate,
                reference: reference.to_string(),
            }),
            Err(e) => failures.push(Failure {
                id: r.report_id.clone(),
                error: e.to_string(),
            }),
        }
    }
    let mut outcome = Outcome::new(corpus.len(), failures);
    outcome.details = json!({ "selected": selected.len() });
    if outcome.must_abort(cfg) {
        return Ok(outcome);
    }
    write_jsonl(&mut *open_output(out)?, &predictions)?;
    outcome.records_out = predictions.len();
    Ok(outcome)
}

#[derive(Deserialize)]
struct LossInput {
    reference: Vec<String>,
    distributions: Vec<PredictedDistribution>,
}

pub fn loss(
    cfg: &RunConfig,
    input: &Path,
    embeddings: &Path,
    out: Option<&Path>,
) -> Result<Outcome> {
    let file =
        File::open(embeddings).with_context(|| format!("opening {}", embeddings.display()))?;
    let table = EmbeddingTable::from_reader(std::io::BufReader::new(file))?;
    let data: LossInput = read_json(input)?;
    let ed = embedding_distance_loss(&data.distributions, &data.reference, &table)?;
    let ce = cross_entropy_loss(
        &data.distributions,
        &data.reference,
        &table,
        cfg.loss.reduction,
    )?;
    let mut body = BTreeMap::new();
    body.insert("steps", json!(data.reference.len()));
    body.insert("embedding_distance_loss", json!(ed));
    body.insert("cross_entropy", json!(ce));
    body.insert("reduction", json!(cfg.loss.reduction));
    write_json(&mut *open_output(out)?, &body)?;
    let mut outcome = Outcome::new(data.reference.len(), Vec::new());
    outcome.records_out = 1;
    Ok(outcome)
}
