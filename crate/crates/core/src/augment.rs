//! Field-order permutation augmentation.
//!
//! A [`PermutationSchedule`] fixes which ordering of the input sections is
//! used in each training epoch. The first `shuffle_start` epochs keep the
//! canonical order; later epochs get a seeded random ordering, either one per
//! epoch ([`ShuffleMode::PerEpoch`]) or one per record
//! ([`ShuffleMode::PerExample`]). Per-record orderings are derived from
//! `(seed, epoch, pair_id)` alone, so any record can be regenerated in
//! isolation.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{RadiologyReport, SectionName};
use crate::seeding::{derive_seed, derive_seed_bytes};

#[derive(Debug, Error, PartialEq)]
pub enum AugmentError {
    #[error("shuffle_start {shuffle_start} exceeds epoch count {epochs}")]
    InvalidEpochRange { epochs: usize, shuffle_start: usize },
    #[error("epoch count must be at least 1")]
    NoEpochs,
    #[error("at least one input field is required")]
    NoFields,
    #[error("IMPRESSION cannot be an input field")]
    ImpressionAsInput,
    #[error("input field {0} listed twice")]
    DuplicateField(SectionName),
    #[error("permutation {0:?} is not a bijection on the input fields")]
    InvalidPermutation(Vec<usize>),
    #[error("epoch {epoch} is outside the schedule ({epochs} epochs)")]
    EpochOutOfRange { epoch: usize, epochs: usize },
    #[error("report {0:?} has no IMPRESSION section")]
    MissingImpression(String),
    #[error("report {report_id:?} lacks input field {field}")]
    MissingField {
        report_id: String,
        field: SectionName,
    },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShuffleMode {
    #[default]
    PerEpoch,
    PerExample,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PermutationSchedule {
    pub fields: Vec<SectionName>,
    pub epochs: usize,
    pub shuffle_start: usize,
    pub seed: u64,
    pub mode: ShuffleMode,
    /// One permutation per epoch in per-epoch mode; empty otherwise.
    pub assignments: Vec<Vec<usize>>,
}

pub const DEFAULT_EPOCHS: usize = 6;
pub const DEFAULT_SHUFFLED_EPOCHS: usize = 3;

fn seeded_permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    perm
}

pub fn is_permutation(perm: &[usize], n: usize) -> bool {
    if perm.len() != n {
        return false;
    }
    let mut seen = vec![false; n];
    perm.iter()
        .all(|&i| i < n && !std::mem::replace(&mut seen[i], true))
}

pub fn make_schedule(
    fields: Vec<SectionName>,
    epochs: usize,
    shuffle_start: usize,
    seed: u64,
    mode: ShuffleMode,
) -> Result<PermutationSchedule, AugmentError> {
    if epochs == 0 {
        return Err(AugmentError::NoEpochs);
    }
    if shuffle_start > epochs {
        return Err(AugmentError::InvalidEpochRange {
            epochs,
            shuffle_start,
        });
    }
    validate_fields(&fields)?;
    let n = fields.len();
    let assignments = match mode {
        ShuffleMode::PerEpoch => (0..epochs)
            .map(|epoch| {
                if epoch < shuffle_start {
                    (0..n).collect()
                } else {
                    seeded_permutation(n, derive_seed(seed, "augment/epoch", epoch as u64))
                }
            })
            .collect(),
        ShuffleMode::PerExample => Vec::new(),
    };
    Ok(PermutationSchedule {
        fields,
        epochs,
        shuffle_start,
        seed,
        mode,
        assignments,
    })
}

fn validate_fields(fields: &[SectionName]) -> Result<(), AugmentError> {
    if fields.is_empty() {
        return Err(AugmentError::NoFields);
    }
    for (i, f) in fields.iter().enumerate() {
        if *f == SectionName::Impression {
            return Err(AugmentError::ImpressionAsInput);
        }
        if fields[..i].contains(f) {
            return Err(AugmentError::DuplicateField(f.clone()));
        }
    }
    Ok(())
}

impl PermutationSchedule {
    /// Ordering for one record in one epoch.
    pub fn permutation_for(&self, epoch: usize, pair_id: &str) -> Result<Vec<usize>, AugmentError> {
        if epoch >= self.epochs {
            return Err(AugmentError::EpochOutOfRange {
                epoch,
                epochs: self.epochs,
            });
        }
        let n = self.fields.len();
        if epoch < self.shuffle_start {
            return Ok((0..n).collect());
        }
        Ok(match self.mode {
            ShuffleMode::PerEpoch => self.assignments[epoch].clone(),
            ShuffleMode::PerExample => {
                let mut key = (epoch as u64).to_le_bytes().to_vec();
                key.extend_from_slice(pair_id.as_bytes());
                seeded_permutation(n, derive_seed_bytes(self.seed, "augment/example", &key))
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderTemplate {
    /// Per-field format with `{header}` and `{body}` placeholders.
    pub field_format: String,
    pub separator: String,
    /// Error instead of skipping when an input field is missing.
    pub strict: bool,
}

impl Default for RenderTemplate {
    fn default() -> Self {
        Self {
            field_format: "{header}: {body}".to_string(),
            separator: " ".to_string(),
            strict: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExamplePair {
    pub pair_id: String,
    pub input_text: String,
    pub target_text: String,
}

/// Renders the permuted input fields of `report` as one model input.
///
/// Field `input_fields[permutation[0]]` comes first, then
/// `input_fields[permutation[1]]`, and so on.
pub fn render_input(
    report: &RadiologyReport,
    permutation: &[usize],
    input_fields: &[SectionName],
    template: &RenderTemplate,
) -> Result<ExamplePair, AugmentError> {
    validate_fields(input_fields)?;
    if !is_permutation(permutation, input_fields.len()) {
        return Err(AugmentError::InvalidPermutation(permutation.to_vec()));
    }
    let target = report
        .section(&SectionName::Impression)
        .filter(|b| !b.trim().is_empty())
        .ok_or_else(|| AugmentError::MissingImpression(report.report_id.clone()))?;
    let mut parts = Vec::with_capacity(permutation.len());
    for &idx in permutation {
        let field = &input_fields[idx];
        match report.section(field).filter(|b| !b.trim().is_empty()) {
            Some(body) => parts.push(
                template
                    .field_format
                    .replace("{header}", field.as_str())
                    .replace("{body}", body),
            ),
            None if template.strict => {
                return Err(AugmentError::MissingField {
                    report_id: report.report_id.clone(),
                    field: field.clone(),
                })
            }
            None => {}
        }
    }
    Ok(ExamplePair {
        pair_id: report.report_id.clone(),
        input_text: parts.join(&template.separator),
        target_text: target.to_string(),
    })
}

/// One rendered record of an expanded corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpochPair {
    pub epoch: usize,
    pub pair_id: String,
    pub input: String,
    pub target: String,
}

impl EpochPair {
    fn new(epoch: usize, pair: ExamplePair) -> Self {
        Self {
            epoch,
            pair_id: pair.pair_id,
            input: pair.input_text,
            target: pair.target_text,
        }
    }
}

/// Lazily renders every report for every epoch, epochs outermost.
pub fn expand_iter<'a>(
    corpus: &'a [RadiologyReport],
    schedule: &'a PermutationSchedule,
    template: &'a RenderTemplate,
) -> impl Iterator<Item = Result<EpochPair, AugmentError>> + 'a {
    (0..schedule.epochs).flat_map(move |epoch| {
        corpus
            .iter()
            .map(move |report| render_for_epoch(report, epoch, schedule, template))
    })
}

fn render_for_epoch(
    report: &RadiologyReport,
    epoch: usize,
    schedule: &PermutationSchedule,
    template: &RenderTemplate,
) -> Result<EpochPair, AugmentError> {
    let perm = schedule.permutation_for(epoch, &report.report_id)?;
    render_input(report, &perm, &schedule.fields, template).map(|p| EpochPair::new(epoch, p))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorPolicy {
    FailFast,
    #[default]
    SkipAndLog,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SkippedRecord {
    pub epoch: usize,
    pub pair_id: String,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Expansion {
    pub pairs: Vec<EpochPair>,
    pub skipped: Vec<SkippedRecord>,
}

/// Renders the whole corpus in parallel, keeping epoch-then-input order.
pub fn expand_corpus(
    corpus: &[RadiologyReport],
    schedule: &PermutationSchedule,
    template: &RenderTemplate,
    policy: ErrorPolicy,
) -> Result<Expansion, AugmentError> {
    let mut out = Expansion::default();
    for epoch in 0..schedule.epochs {
        let rendered: Vec<_> = corpus
            .par_iter()
            .map(|r| render_for_epoch(r, epoch, schedule, template))
            .collect();
        for (report, result) in corpus.iter().zip(rendered) {
            match result {
                Ok(pair) => out.pairs.push(pair),
                Err(e) if policy == ErrorPolicy::SkipAndLog => {
                    log::warn!("epoch {epoch}: skipping {}: {e}", report.report_id);
                    out.skipped.push(SkippedRecord {
                        epoch,
                        pair_id: report.report_id.clone(),
                        error: e.to_string(),
                    });
                }
                Err(e) => return Err(e),
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::parse_report;
    use std::collections::HashMap;

    const SAMPLE_REPORT: &str = "COMPARISON: Chest radiograph ____\nFINDINGS: Normal size of the cardiac silhouette. No pneumonia.\nIMPRESSION: No evidence of pneumonia.\nINDICATION: ____ year old man with cough. // r/o pneumonia,\nTECHNIQUE: Chest PA and lateral\n";

    fn fields4() -> Vec<SectionName> {
        vec![
            SectionName::Comparison,
            SectionName::Findings,
            SectionName::Indication,
            SectionName::Technique,
        ]
    }

    #[test]
    fn schedule_identity_then_shuffled() {
        let fields = vec![
            SectionName::Findings,
            SectionName::Indication,
            SectionName::Technique,
            SectionName::Comparison,
        ];
        let s = make_schedule(fields.clone(), 6, 3, 11, ShuffleMode::PerEpoch).unwrap();
        assert_eq!(s.assignments.len(), 6);
        for epoch in 0..3 {
            assert_eq!(s.assignments[epoch], [0, 1, 2, 3]);
        }
        for epoch in 3..6 {
            assert!(is_permutation(&s.assignments[epoch], 4));
        }
        let again = make_schedule(fields, 6, 3, 11, ShuffleMode::PerEpoch).unwrap();
        assert_eq!(
            serde_json::to_string(&s).unwrap(),
            serde_json::to_string(&again).unwrap()
        );
    }

    #[test]
    fn schedule_with_one_field_is_identity() {
        let s = make_schedule(vec![SectionName::Findings], 5, 0, 3, ShuffleMode::PerEpoch).unwrap();
        assert!(s.assignments.iter().all(|p| p == &[0]));
    }

    #[test]
    fn schedule_errors() {
        let f = vec![SectionName::Findings];
        assert_eq!(
            make_schedule(f.clone(), 3, 4, 0, ShuffleMode::PerEpoch),
            Err(AugmentError::InvalidEpochRange {
                epochs: 3,
                shuffle_start: 4
            })
        );
        assert_eq!(
            make_schedule(f.clone(), 0, 0, 0, ShuffleMode::PerEpoch),
            Err(AugmentError::NoEpochs)
        );
        assert_eq!(
            make_schedule(vec![], 1, 0, 0, ShuffleMode::PerEpoch),
            Err(AugmentError::NoFields)
        );
        assert_eq!(
            make_schedule(
                vec![SectionName::Impression],
                1,
                0,
                0,
                ShuffleMode::PerEpoch
            ),
            Err(AugmentError::ImpressionAsInput)
        );
        // shuffle_start == epochs means no shuffling at all
        assert!(make_schedule(f, 3, 3, 0, ShuffleMode::PerEpoch).is_ok());
    }

    #[test]
    fn render_identity_and_reversed() {
        let report = parse_report("sample", SAMPLE_REPORT).unwrap();
        let t = RenderTemplate::default();
        let pair = render_input(&report, &[0, 1, 2, 3], &fields4(), &t).unwrap();
        assert!(pair.input_text.starts_with("COMPARISON: Chest radiograph"));
        assert_eq!(pair.target_text, "No evidence of pneumonia.");
        assert!(!pair.input_text.contains("IMPRESSION"));

        let rev = render_input(&report, &[3, 2, 1, 0], &fields4(), &t).unwrap();
        assert!(rev
            .input_text
            .starts_with("TECHNIQUE: Chest PA and lateral"));
    }

    #[test]
    fn render_errors_and_skips() {
        let report = parse_report("r", "FINDINGS: clear.\nTECHNIQUE: PA.").unwrap();
        let t = RenderTemplate::default();
        assert_eq!(
            render_input(&report, &[0, 1, 2, 3], &fields4(), &t),
            Err(AugmentError::MissingImpression("r".into()))
        );
        let report = parse_report("r", "FINDINGS: clear.\nIMPRESSION: normal.").unwrap();
        let pair = render_input(&report, &[0, 1, 2, 3], &fields4(), &t).unwrap();
        assert_eq!(pair.input_text, "FINDINGS: clear.");
        let strict = RenderTemplate {
            strict: true,
            ..t.clone()
        };
        assert!(matches!(
            render_input(&report, &[0, 1, 2, 3], &fields4(), &strict),
            Err(AugmentError::MissingField { .. })
        ));
        assert!(matches!(
            render_input(&report, &[0, 0, 2, 3], &fields4(), &t),
            Err(AugmentError::InvalidPermutation(_))
        ));
    }

    #[test]
    fn custom_template() {
        let report = parse_report("r", "FINDINGS: clear.\nTECHNIQUE: PA.\nIMPRESSION: ok").unwrap();
        let t = RenderTemplate {
            field_format: "<{header}> {body}".into(),
            separator: "\n".into(),
            strict: false,
        };
        let pair = render_input(
            &report,
            &[1, 0],
            &[SectionName::Findings, SectionName::Technique],
            &t,
        )
        .unwrap();
        assert_eq!(pair.input_text, "<TECHNIQUE> PA.\n<FINDINGS> clear.");
    }

    #[test]
    fn expansion_cardinality_and_identity_epochs() {
        let a = parse_report("a", SAMPLE_REPORT).unwrap();
        let b = parse_report("b", SAMPLE_REPORT).unwrap();
        let corpus = vec![a, b];
        let s = make_schedule(fields4(), 3, 1, 5, ShuffleMode::PerEpoch).unwrap();
        let t = RenderTemplate::default();
        let out = expand_corpus(&corpus, &s, &t, ErrorPolicy::FailFast).unwrap();
        assert_eq!(out.pairs.len(), 6);
        let lazy: Vec<_> = expand_iter(&corpus, &s, &t)
            .collect::<Result<_, _>>()
            .unwrap();
        assert_eq!(lazy, out.pairs);
        let canonical = render_input(&corpus[0], &[0, 1, 2, 3], &fields4(), &t).unwrap();
        assert_eq!(out.pairs[0].input, canonical.input_text);
        assert_eq!(out.pairs[0].epoch, 0);
        assert_eq!(out.pairs[5].epoch, 2);
    }

    #[test]
    fn expansion_error_policies() {
        let good = parse_report("good", SAMPLE_REPORT).unwrap();
        let bad = parse_report("bad", "FINDINGS: only").unwrap();
        let corpus = vec![good, bad];
        let s = make_schedule(fields4(), 2, 0, 1, ShuffleMode::PerExample).unwrap();
        let t = RenderTemplate::default();
        let out = expand_corpus(&corpus, &s, &t, ErrorPolicy::SkipAndLog).unwrap();
        assert_eq!(out.pairs.len(), 2);
        assert_eq!(out.skipped.len(), 2);
        assert_eq!(
            expand_corpus(&corpus, &s, &t, ErrorPolicy::FailFast),
            Err(AugmentError::MissingImpression("bad".into()))
        );
    }

    #[test]
    fn per_example_is_recomputable() {
        let s = make_schedule(fields4(), 4, 1, 99, ShuffleMode::PerExample).unwrap();
        assert!(s.assignments.is_empty());
        let p1 = s.permutation_for(2, "report-17").unwrap();
        let p2 = s.permutation_for(2, "report-17").unwrap();
        assert_eq!(p1, p2);
        assert_eq!(s.permutation_for(0, "report-17").unwrap(), [0, 1, 2, 3]);
        assert!(s.permutation_for(4, "x").is_err());
    }

    #[test]
    fn per_example_is_roughly_uniform() {
        // chi-square against uniform over S_n; p = 0.001 critical values
        let all = [
            SectionName::Findings,
            SectionName::Indication,
            SectionName::Technique,
            SectionName::Comparison,
        ];
        for (n, critical) in [(2usize, 10.83), (3, 20.52), (4, 49.73)] {
            let s = make_schedule(all[..n].to_vec(), 2, 0, 2024, ShuffleMode::PerExample).unwrap();
            let orderings: usize = (1..=n).product();
            let draws = 500 * orderings;
            let mut counts: HashMap<Vec<usize>, usize> = HashMap::new();
            for i in 0..draws {
                *counts
                    .entry(s.permutation_for(1, &format!("r{i}")).unwrap())
                    .or_default() += 1;
            }
            assert_eq!(counts.len(), orderings);
            let expected = draws as f64 / orderings as f64;
            let chi2: f64 = counts
                .values()
                .map(|&c| (c as f64 - expected).powi(2) / expected)
                .sum();
            assert!(chi2 < critical, "n = {n}: chi2 = {chi2}");
        }
    }
}
