//! Baseline summarizers and disease-stratified score analysis.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{
    is_no_findings, LabelValue, RadiologyReport, SectionName, DEFAULT_NO_FINDING_KEY,
};
use crate::rouge::{Component, Metric, ScoreSet};
use crate::textnorm::{split_sentences, SentenceConfig};

#[derive(Debug, Error, PartialEq)]
pub enum EvaluationError {
    #[error("report {0:?} has no FINDINGS section")]
    MissingFindings(String),
    #[error("k must be at least 1")]
    InvalidK,
    #[error("correlation needs at least two strata with non-zero variance in both coordinates")]
    DegenerateVariance,
}

pub const CANONICAL_PHRASE: &str = "There is no cardiopulmonary process";

/// Constant-output baseline: ignores the report entirely.
pub fn canonical_baseline(_report: &RadiologyReport, phrase: &str) -> String {
    phrase.to_string()
}

/// The first `k` sentences of FINDINGS, joined with single spaces.
pub fn extractive_baseline(
    report: &RadiologyReport,
    k: usize,
    sentences: &SentenceConfig,
) -> Result<String, EvaluationError> {
    if k == 0 {
        return Err(EvaluationError::InvalidK);
    }
    let findings = report
        .section(&SectionName::Findings)
        .ok_or_else(|| EvaluationError::MissingFindings(report.report_id.clone()))?;
    Ok(split_sentences(findings, sentences)
        .into_iter()
        .take(k)
        .collect::<Vec<_>>()
        .join(" "))
}

/// Name of the synthetic stratum built from [`is_no_findings`].
pub const NO_FINDINGS_STRATUM: &str = "No Findings";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct StratifySpec {
    /// Label polarities that form strata.
    #[serde(with = "polarity_names")]
    pub polarities: Vec<LabelValue>,
    /// Add a stratum of reports passing [`is_no_findings`].
    pub no_findings_stratum: bool,
    pub no_finding_key: String,
}

impl Default for StratifySpec {
    fn default() -> Self {
        Self {
            polarities: vec![LabelValue::Indicated],
            no_findings_stratum: true,
            no_finding_key: DEFAULT_NO_FINDING_KEY.to_string(),
        }
    }
}

mod polarity_names {
    use super::LabelValue;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[LabelValue], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(|p| p.name()))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<LabelValue>, D::Error> {
        Vec::<String>::deserialize(d)?
            .iter()
            .map(|s| s.parse().map_err(serde::de::Error::custom))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumReport {
    pub disease: String,
    /// `None` for the synthetic No Findings stratum.
    pub polarity: Option<String>,
    pub n_examples: usize,
    pub mean_scores: ScoreSet,
}

/// Groups scored reports by (disease, polarity). A report with several
/// labels lands in several strata, so `n_examples` may sum past N. Sorted
/// by descending `n_examples`, ties by disease then polarity.
pub fn stratify(items: &[(&RadiologyReport, ScoreSet)], spec: &StratifySpec) -> Vec<StratumReport> {
    let mut groups: BTreeMap<(String, Option<LabelValue>), Vec<ScoreSet>> = BTreeMap::new();
    for (report, scores) in items {
        for (disease, &value) in &report.labels {
            if spec.no_findings_stratum && disease == &spec.no_finding_key {
                continue;
            }
            if spec.polarities.contains(&value) {
                groups
                    .entry((disease.clone(), Some(value)))
                    .or_default()
                    .push(*scores);
            }
        }
        if spec.no_findings_stratum && is_no_findings(report, &spec.no_finding_key) {
            groups
                .entry((NO_FINDINGS_STRATUM.to_string(), None))
                .or_default()
                .push(*scores);
        }
    }
    let mut strata: Vec<StratumReport> = groups
        .into_iter()
        .map(|((disease, polarity), sets)| StratumReport {
            disease,
            polarity: polarity.map(|p| p.name().to_string()),
            n_examples: sets.len(),
            mean_scores: ScoreSet::mean(&sets).expect("groups are non-empty"),
        })
        .collect();
    strata.sort_by_key(|s| std::cmp::Reverse(s.n_examples));
    strata
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64, EvaluationError> {
    let n = xs.len();
    if n < 2 || ys.len() != n {
        return Err(EvaluationError::DegenerateVariance);
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return Err(EvaluationError::DegenerateVariance);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Pearson correlation between stratum size and mean score.
pub fn count_score_correlation(
    strata: &[StratumReport],
    metric: Metric,
    component: Component,
) -> Result<f64, EvaluationError> {
    let counts: Vec<f64> = strata.iter().map(|s| s.n_examples as f64).collect();
    let scores: Vec<f64> = strata
        .iter()
        .map(|s| s.mean_scores.get(metric).component(component))
        .collect();
    pearson(&counts, &scores)
}
