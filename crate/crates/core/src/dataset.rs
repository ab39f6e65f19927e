//! Corpus filtering, train/test splitting, batch collation and token-length
//! statistics.

use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::augment::ExamplePair;
use crate::ingest::{RadiologyReport, SectionName};
use crate::rouge::quantile_sorted;
use crate::seeding::derive_seed;
use crate::textnorm::{self, NormalizationConfig};

#[derive(Debug, Error, PartialEq)]
pub enum DatasetError {
    #[error("split ratio must lie strictly between 0 and 1, got {0}")]
    InvalidRatio(f64),
    #[error("need at least 2 reports to split, got {0}")]
    CorpusTooSmall(usize),
    #[error("report id {0:?} appears more than once")]
    DuplicateId(String),
    #[error("cannot collate an empty batch")]
    EmptyBatch,
    #[error("length caps must be at least 2 (input {input}, target {target})")]
    InvalidCap { input: usize, target: usize },
}

/// Why reports were dropped by [`filter_complete`].
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DropReport {
    pub total: usize,
    pub kept: usize,
    pub dropped: usize,
    /// Each dropped report counted once, under the first missing field
    /// (required fields in the given order, then IMPRESSION). Sums to
    /// `dropped`.
    pub dropped_by_field: BTreeMap<String, usize>,
    /// Every missing field of every dropped report.
    pub missing_occurrences: BTreeMap<String, usize>,
}

/// Keeps reports with a non-empty IMPRESSION and every required field.
pub fn filter_complete(
    corpus: Vec<RadiologyReport>,
    required_fields: &[SectionName],
) -> (Vec<RadiologyReport>, DropReport) {
    let checks: Vec<&SectionName> = required_fields
        .iter()
        .chain(std::iter::once(&SectionName::Impression))
        .collect();
    let missing: Vec<Vec<String>> = corpus
        .par_iter()
        .map(|r| {
            let mut names: Vec<String> = Vec::new();
            for field in &checks {
                if !r.has_section(field) && !names.iter().any(|n| n == field.as_str()) {
                    names.push(field.to_string());
                }
            }
            names
        })
        .collect();

    let mut report = DropReport {
        total: corpus.len(),
        ..DropReport::default()
    };
    let mut kept = Vec::new();
    for (r, miss) in corpus.into_iter().zip(missing) {
        match miss.first() {
            None => kept.push(r),
            Some(first) => {
                *report.dropped_by_field.entry(first.clone()).or_default() += 1;
                for m in miss {
                    *report.missing_occurrences.entry(m).or_default() += 1;
                }
            }
        }
    }
    report.kept = kept.len();
    report.dropped = report.total - report.kept;
    (kept, report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitResult {
    #[serde(rename = "train")]
    pub train_ids: Vec<String>,
    #[serde(rename = "test")]
    pub test_ids: Vec<String>,
    pub seed: u64,
    pub ratio: f64,
}

/// Number of training items: `ratio * n` rounded half up.
pub fn train_count(n: usize, ratio: f64) -> usize {
    ((ratio * n as f64) + 0.5).floor() as usize
}

/// Seeded shuffle of the ids; the first `round(ratio * N)` become train.
pub fn split(ids: &[String], ratio: f64, seed: u64) -> Result<SplitResult, DatasetError> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(DatasetError::InvalidRatio(ratio));
    }
    if ids.len() < 2 {
        return Err(DatasetError::CorpusTooSmall(ids.len()));
    }
    let mut seen = HashSet::with_capacity(ids.len());
    if let Some(dup) = ids.iter().find(|id| !seen.insert(id.as_str())) {
        return Err(DatasetError::DuplicateId(dup.clone()));
    }
    let mut shuffled = ids.to_vec();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(
        seed, "split", 0,
    )));
    let test_ids = shuffled.split_off(train_count(ids.len(), ratio).min(ids.len()));
    Ok(SplitResult {
        train_ids: shuffled,
        test_ids,
        seed,
        ratio,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpecialTokens {
    pub start: String,
    pub end: String,
    pub pad: String,
}

impl Default for SpecialTokens {
    fn default() -> Self {
        Self {
            start: "<s>".into(),
            end: "</s>".into(),
            pad: "<pad>".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CollateConfig {
    pub max_input_len: usize,
    pub max_target_len: usize,
    pub markers: SpecialTokens,
    pub normalization: NormalizationConfig,
}

impl Default for CollateConfig {
    fn default() -> Self {
        Self {
            max_input_len: 512,
            max_target_len: 128,
            markers: SpecialTokens::default(),
            normalization: NormalizationConfig::default(),
        }
    }
}

/// A padded teacher-forcing batch of token strings. Mapping tokens to ids is
/// left to the consuming trainer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CollatedBatch {
    pub pair_ids: Vec<String>,
    pub input_tokens: Vec<Vec<String>>,
    pub input_mask: Vec<Vec<u8>>,
    pub decoder_input: Vec<Vec<String>>,
    pub decoder_target: Vec<Vec<String>>,
    pub target_mask: Vec<Vec<u8>>,
    pub truncated_inputs: usize,
    pub truncated_targets: usize,
}

fn pad_rows(rows: Vec<Vec<String>>, pad: &str) -> (Vec<Vec<String>>, Vec<Vec<u8>>) {
    let width = rows.iter().map(Vec::len).max().unwrap_or(0);
    rows.into_iter()
        .map(|mut row| {
            let mut mask = vec![1u8; row.len()];
            mask.resize(width, 0);
            row.resize(width, pad.to_string());
            (row, mask)
        })
        .unzip()
}

pub fn collate(pairs: &[ExamplePair], cfg: &CollateConfig) -> Result<CollatedBatch, DatasetError> {
    if pairs.is_empty() {
        return Err(DatasetError::EmptyBatch);
    }
    if cfg.max_input_len < 2 || cfg.max_target_len < 2 {
        return Err(DatasetError::InvalidCap {
            input: cfg.max_input_len,
            target: cfg.max_target_len,
        });
    }
    let tok = |text: &str| {
        textnorm::tokenize(&textnorm::normalize(text, &cfg.normalization)).into_tokens()
    };
    let mut truncated_inputs = 0;
    let mut truncated_targets = 0;
    let mut inputs = Vec::with_capacity(pairs.len());
    let mut dec_in = Vec::with_capacity(pairs.len());
    let mut dec_out = Vec::with_capacity(pairs.len());
    for pair in pairs {
        let mut input = tok(&pair.input_text);
        if input.len() > cfg.max_input_len {
            input.truncate(cfg.max_input_len);
            truncated_inputs += 1;
        }
        let mut target = tok(&pair.target_text);
        if target.len() > cfg.max_target_len - 1 {
            target.truncate(cfg.max_target_len - 1);
            truncated_targets += 1;
        }
        let mut shifted = Vec::with_capacity(target.len() + 1);
        shifted.push(cfg.markers.start.clone());
        shifted.extend(target.iter().cloned());
        target.push(cfg.markers.end.clone());
        inputs.push(input);
        dec_in.push(shifted);
        dec_out.push(target);
    }
    let (input_tokens, input_mask) = pad_rows(inputs, &cfg.markers.pad);
    let (decoder_input, target_mask) = pad_rows(dec_in, &cfg.markers.pad);
    let (decoder_target, _) = pad_rows(dec_out, &cfg.markers.pad);
    Ok(CollatedBatch {
        pair_ids: pairs.iter().map(|p| p.pair_id.clone()).collect(),
        input_tokens,
        input_mask,
        decoder_input,
        decoder_target,
        target_mask,
        truncated_inputs,
        truncated_targets,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LengthDistribution {
    /// Number of reports contributing a value.
    pub count: usize,
    pub min: usize,
    pub mean: f64,
    pub median: f64,
    pub p95: f64,
    pub max: usize,
}

impl LengthDistribution {
    pub fn from_counts(values: &[usize]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut sorted: Vec<f64> = values.iter().map(|&v| v as f64).collect();
        sorted.sort_by(f64::total_cmp);
        Some(Self {
            count: values.len(),
            min: *values.iter().min().expect("non-empty"),
            mean: sorted.iter().sum::<f64>() / values.len() as f64,
            median: quantile_sorted(&sorted, 0.5),
            p95: quantile_sorted(&sorted, 0.95),
            max: *values.iter().max().expect("non-empty"),
        })
    }
}

/// Word-token length statistics. Counts are whitespace/punctuation tokens,
/// which run lower than subword counts from model tokenizers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub reports: usize,
    /// Per field, over the reports that contain it.
    pub per_field: BTreeMap<String, Option<LengthDistribution>>,
    /// Sum over the selected fields per report (absent fields add 0).
    pub combined: Option<LengthDistribution>,
    #[serde(skip)]
    pub combined_values: Vec<usize>,
}

pub fn corpus_stats(
    corpus: &[RadiologyReport],
    fields: &[SectionName],
    norm: &NormalizationConfig,
) -> CorpusStats {
    let lengths: Vec<Vec<Option<usize>>> = corpus
        .par_iter()
        .map(|r| {
            fields
                .iter()
                .map(|f| {
                    r.section(f)
                        .map(|b| textnorm::tokenize(&textnorm::normalize(b, norm)).len())
                })
                .collect()
        })
        .collect();
    let per_field = fields
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let values: Vec<usize> = lengths.iter().filter_map(|row| row[i]).collect();
            (f.to_string(), LengthDistribution::from_counts(&values))
        })
        .collect();
    let combined_values: Vec<usize> = lengths
        .iter()
        .map(|row| row.iter().flatten().sum())
        .collect();
    CorpusStats {
        reports: corpus.len(),
        per_field,
        combined: LengthDistribution::from_counts(&combined_values),
        combined_values,
    }
}

/// `(bin_start, count)` rows for a fixed bin width.
pub fn histogram(values: &[usize], bin_width: usize) -> Vec<(usize, usize)> {
    let width = bin_width.max(1);
    let mut bins: BTreeMap<usize, usize> = BTreeMap::new();
    for &v in values {
        *bins.entry(v / width * width).or_default() += 1;
    }
    bins.into_iter().collect()
}
