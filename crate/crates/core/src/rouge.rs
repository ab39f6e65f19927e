//! ROUGE-N, ROUGE-L and ROUGE-Lsum.
//!
//! Precision divides by the candidate length and recall by the reference
//! length (the usual convention). F1 is the harmonic mean of the two and is
//! therefore the same whichever way the denominators are assigned.
//!
//! Scores are kept in `[0, 1]`; display code multiplies by 100.

use std::collections::HashMap;
use std::hash::Hash;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seeding::derive_seed;
use crate::textnorm::{self, NormalizationConfig, SentenceConfig};

#[derive(Debug, Error, PartialEq)]
pub enum RougeError {
    #[error("n-gram order must be at least 1, got {0}")]
    InvalidN(usize),
    #[error("cannot aggregate an empty list of scores")]
    EmptyScoreList,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RougeScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl RougeScore {
    pub const ZERO: RougeScore = RougeScore {
        precision: 0.0,
        recall: 0.0,
        f1: 0.0,
    };

    pub fn from_precision_recall(precision: f64, recall: f64) -> Self {
        let sum = precision + recall;
        let f1 = if sum > 0.0 {
            2.0 * precision * recall / sum
        } else {
            0.0
        };
        Self {
            precision,
            recall,
            f1,
        }
    }

    /// Score from a hit count and the two sequence lengths.
    fn from_counts(hits: usize, candidate_len: usize, reference_len: usize) -> Self {
        if hits == 0 || candidate_len == 0 || reference_len == 0 {
            return Self::ZERO;
        }
        Self::from_precision_recall(
            hits as f64 / candidate_len as f64,
            hits as f64 / reference_len as f64,
        )
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            precision: self.precision * factor,
            recall: self.recall * factor,
            f1: self.f1 * factor,
        }
    }
}

/// Length of the longest common subsequence.
///
/// Inputs whose shorter side fits in 64 items use a bit-parallel row; longer
/// ones fall back to the O(|a|·|b|) dynamic program with one rolling row.
pub fn lcs_length<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let (long, short) = if a.len() >= b.len() { (a, b) } else { (b, a) };
    if short.is_empty() {
        return 0;
    }
    if short.len() <= 64 {
        return lcs_bit_parallel(long, short);
    }
    let mut row = vec![0usize; short.len() + 1];
    for x in long {
        let mut diag = 0;
        for (j, y) in short.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = if x == y { diag + 1 } else { up.max(row[j]) };
            diag = up;
        }
    }
    row[short.len()]
}

/// Bit-vector LCS (Allison-Dix / Hyyro). A cleared bit j of `v` marks a
/// step of the DP row at column j, so the LCS is the number of cleared bits.
fn lcs_bit_parallel<T: PartialEq>(long: &[T], short: &[T]) -> usize {
    debug_assert!(!short.is_empty() && short.len() <= 64);
    let mut v = u64::MAX;
    for x in long {
        let mut matches = 0u64;
        for (j, y) in short.iter().enumerate() {
            matches |= u64::from(x == y) << j;
        }
        let u = v & matches;
        v = v.wrapping_add(u) | (v - u);
    }
    let width = u64::MAX >> (64 - short.len());
    (!v & width).count_ones() as usize
}

/// Full LCS table, used to backtrack the matched positions of `reference`.
fn lcs_reference_positions<T: PartialEq>(reference: &[T], candidate: &[T]) -> Vec<usize> {
    let (n, m) = (reference.len(), candidate.len());
    let mut table = vec![0u32; (n + 1) * (m + 1)];
    let at = |i: usize, j: usize| i * (m + 1) + j;
    for i in 1..=n {
        for j in 1..=m {
            table[at(i, j)] = if reference[i - 1] == candidate[j - 1] {
                table[at(i - 1, j - 1)] + 1
            } else {
                table[at(i - 1, j)].max(table[at(i, j - 1)])
            };
        }
    }
    let mut hits = Vec::new();
    let (mut i, mut j) = (n, m);
    while i > 0 && j > 0 {
        if reference[i - 1] == candidate[j - 1] {
            hits.push(i - 1);
            i -= 1;
            j -= 1;
        } else if table[at(i - 1, j)] >= table[at(i, j - 1)] {
            i -= 1;
        } else {
            j -= 1;
        }
    }
    hits.reverse();
    hits
}

fn ngram_counts<T: Eq + Hash>(tokens: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut counts = HashMap::new();
    for gram in tokens.windows(n) {
        *counts.entry(gram).or_insert(0) += 1;
    }
    counts
}

/// ROUGE-N with clipped (multiset) n-gram overlap.
pub fn rouge_n<T: Eq + Hash>(
    candidate: &[T],
    reference: &[T],
    n: usize,
) -> Result<RougeScore, RougeError> {
    if n == 0 {
        return Err(RougeError::InvalidN(n));
    }
    if candidate.len() < n || reference.len() < n {
        return Ok(RougeScore::ZERO);
    }
    let cand = ngram_counts(candidate, n);
    let refs = ngram_counts(reference, n);
    let overlap: usize = cand
        .iter()
        .map(|(gram, &c)| refs.get(gram).map_or(0, |&r| c.min(r)))
        .sum();
    Ok(RougeScore::from_counts(
        overlap,
        candidate.len() + 1 - n,
        reference.len() + 1 - n,
    ))
}

pub fn rouge_l<T: PartialEq>(candidate: &[T], reference: &[T]) -> RougeScore {
    let lcs = lcs_length(candidate, reference);
    RougeScore::from_counts(lcs, candidate.len(), reference.len())
}

/// Summary-level ROUGE-L over pre-split sentences.
///
/// For every reference sentence the union of its LCS matches against all
/// candidate sentences is taken; a token type is credited only while unused
/// occurrences remain on both sides.
pub fn rouge_lsum_sentences<T: Eq + Hash + Clone>(
    candidate: &[Vec<T>],
    reference: &[Vec<T>],
) -> RougeScore {
    let cand_len: usize = candidate.iter().map(Vec::len).sum();
    let ref_len: usize = reference.iter().map(Vec::len).sum();
    if cand_len == 0 || ref_len == 0 {
        return RougeScore::ZERO;
    }
    let mut cand_budget: HashMap<&T, usize> = HashMap::new();
    for tok in candidate.iter().flatten() {
        *cand_budget.entry(tok).or_insert(0) += 1;
    }
    let mut ref_budget: HashMap<&T, usize> = HashMap::new();
    for tok in reference.iter().flatten() {
        *ref_budget.entry(tok).or_insert(0) += 1;
    }

    let mut hits = 0;
    for ref_sent in reference {
        let mut union: Vec<usize> = candidate
            .iter()
            .flat_map(|c| lcs_reference_positions(ref_sent, c))
            .collect();
        union.sort_unstable();
        union.dedup();
        for pos in union {
            let tok = &ref_sent[pos];
            let (Some(r), Some(c)) = (ref_budget.get_mut(tok), cand_budget.get_mut(tok)) else {
                continue;
            };
            if *r > 0 && *c > 0 {
                *r -= 1;
                *c -= 1;
                hits += 1;
            }
        }
    }
    RougeScore::from_counts(hits, cand_len, ref_len)
}

/// How raw text becomes scoring tokens.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScoringOptions {
    pub normalization: NormalizationConfig,
    pub sentences: SentenceConfig,
    /// Keep tokens made only of punctuation. Off by default so that "no
    /// pneumonia." and "no pneumonia" score identically.
    pub keep_punctuation: bool,
}

impl ScoringOptions {
    pub fn tokens(&self, text: &str) -> Vec<String> {
        let seq = textnorm::tokenize(&textnorm::normalize(text, &self.normalization));
        if self.keep_punctuation {
            seq.into_tokens()
        } else {
            seq.without_punctuation().into_tokens()
        }
    }

    pub fn sentence_tokens(&self, text: &str) -> Vec<Vec<String>> {
        textnorm::split_sentences(text, &self.sentences)
            .iter()
            .map(|s| self.tokens(s))
            .filter(|t| !t.is_empty())
            .collect()
    }
}

/// ROUGE-Lsum on raw texts.
pub fn rouge_lsum(candidate: &str, reference: &str, opts: &ScoringOptions) -> RougeScore {
    rouge_lsum_sentences(
        &opts.sentence_tokens(candidate),
        &opts.sentence_tokens(reference),
    )
}

/// The four scores reported per candidate/reference pair.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreSet {
    pub rouge1: RougeScore,
    pub rouge2: RougeScore,
    #[serde(rename = "rougeL")]
    pub rouge_l: RougeScore,
    #[serde(rename = "rougeLsum")]
    pub rouge_lsum: RougeScore,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Metric {
    #[serde(rename = "rouge1")]
    Rouge1,
    #[serde(rename = "rouge2")]
    Rouge2,
    #[serde(rename = "rougeL")]
    RougeL,
    #[serde(rename = "rougeLsum")]
    RougeLsum,
}

impl Metric {
    pub const ALL: [Metric; 4] = [
        Metric::Rouge1,
        Metric::Rouge2,
        Metric::RougeL,
        Metric::RougeLsum,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Rouge1 => "rouge1",
            Metric::Rouge2 => "rouge2",
            Metric::RougeL => "rougeL",
            Metric::RougeLsum => "rougeLsum",
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown metric {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Component {
    Precision,
    Recall,
    F1,
}

impl std::str::FromStr for Component {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "precision" | "p" => Ok(Component::Precision),
            "recall" | "r" => Ok(Component::Recall),
            "f1" | "f" | "fmeasure" => Ok(Component::F1),
            _ => Err(format!("unknown score component {s:?}")),
        }
    }
}

impl ScoreSet {
    pub fn get(&self, metric: Metric) -> RougeScore {
        match metric {
            Metric::Rouge1 => self.rouge1,
            Metric::Rouge2 => self.rouge2,
            Metric::RougeL => self.rouge_l,
            Metric::RougeLsum => self.rouge_lsum,
        }
    }

    fn get_mut(&mut self, metric: Metric) -> &mut RougeScore {
        match metric {
            Metric::Rouge1 => &mut self.rouge1,
            Metric::Rouge2 => &mut self.rouge2,
            Metric::RougeL => &mut self.rouge_l,
            Metric::RougeLsum => &mut self.rouge_lsum,
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            rouge1: self.rouge1.scaled(factor),
            rouge2: self.rouge2.scaled(factor),
            rouge_l: self.rouge_l.scaled(factor),
            rouge_lsum: self.rouge_lsum.scaled(factor),
        }
    }

    /// Component-wise mean; `None` for an empty slice.
    pub fn mean(sets: &[ScoreSet]) -> Option<ScoreSet> {
        let mut out = ScoreSet::default();
        for metric in Metric::ALL {
            let scores: Vec<RougeScore> = sets.iter().map(|s| s.get(metric)).collect();
            *out.get_mut(metric) = mean_score(&scores).ok()?;
        }
        Some(out)
    }
}

impl RougeScore {
    pub fn component(&self, c: Component) -> f64 {
        match c {
            Component::Precision => self.precision,
            Component::Recall => self.recall,
            Component::F1 => self.f1,
        }
    }
}

pub fn score_texts(candidate: &str, reference: &str, opts: &ScoringOptions) -> ScoreSet {
    let cand = opts.tokens(candidate);
    let refs = opts.tokens(reference);
    ScoreSet {
        rouge1: rouge_n(&cand, &refs, 1).expect("n = 1 is valid"),
        rouge2: rouge_n(&cand, &refs, 2).expect("n = 2 is valid"),
        rouge_l: rouge_l(&cand, &refs),
        rouge_lsum: rouge_lsum(candidate, reference, opts),
    }
}

/// One candidate/reference pair awaiting scoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub pair_id: String,
    pub candidate: String,
    pub reference: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairScores {
    pub pair_id: String,
    #[serde(flatten)]
    pub scores: ScoreSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RougeReport {
    pub per_pair: Vec<PairScores>,
    pub aggregate: ScoreSet,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intervals: Option<Vec<MetricInterval>>,
}

/// Scores every pair on the current rayon pool. Output order follows input
/// order regardless of thread count.
pub fn score_pairs(
    records: &[PredictionRecord],
    opts: &ScoringOptions,
    bootstrap: Option<&BootstrapConfig>,
) -> Result<RougeReport, RougeError> {
    let per_pair: Vec<PairScores> = records
        .par_iter()
        .map(|r| PairScores {
            pair_id: r.pair_id.clone(),
            scores: score_texts(&r.candidate, &r.reference, opts),
        })
        .collect();
    let sets: Vec<ScoreSet> = per_pair.iter().map(|p| p.scores).collect();
    let aggregate = ScoreSet::mean(&sets).ok_or(RougeError::EmptyScoreList)?;
    let intervals = match bootstrap {
        Some(cfg) => Some(
            Metric::ALL
                .into_iter()
                .map(|metric| {
                    let scores: Vec<RougeScore> = sets.iter().map(|s| s.get(metric)).collect();
                    aggregate_scores(&scores, Some(cfg)).map(|agg| MetricInterval {
                        metric,
                        interval: agg.interval.expect("bootstrap requested"),
                    })
                })
                .collect::<Result<_, _>>()?,
        ),
        None => None,
    };
    Ok(RougeReport {
        per_pair,
        aggregate,
        intervals,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct BootstrapConfig {
    pub resamples: usize,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            resamples: 1000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
}

impl Interval {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

/// 95% percentile-bootstrap bounds for each score component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreInterval {
    pub precision: Interval,
    pub recall: Interval,
    pub f1: Interval,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricInterval {
    pub metric: Metric,
    #[serde(flatten)]
    pub interval: ScoreInterval,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: RougeScore,
    pub interval: Option<ScoreInterval>,
}

pub fn mean_score(scores: &[RougeScore]) -> Result<RougeScore, RougeError> {
    if scores.is_empty() {
        return Err(RougeError::EmptyScoreList);
    }
    let n = scores.len() as f64;
    let mut sum = RougeScore::ZERO;
    for s in scores {
        sum.precision += s.precision;
        sum.recall += s.recall;
        sum.f1 += s.f1;
    }
    Ok(sum.scaled(1.0 / n))
}

/// Mean of each component, optionally with a seeded bootstrap interval.
///
/// Resample `i` draws from its own generator seeded by `(seed, i)`, so the
/// result does not depend on how resamples are spread over threads.
pub fn aggregate_scores(
    scores: &[RougeScore],
    bootstrap: Option<&BootstrapConfig>,
) -> Result<Aggregate, RougeError> {
    let mean = mean_score(scores)?;
    let interval = bootstrap.map(|cfg| {
        let means: Vec<RougeScore> = (0..cfg.resamples.max(1))
            .into_par_iter()
            .map(|i| {
                let mut rng =
                    ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "bootstrap", i as u64));
                let sample: Vec<RougeScore> = (0..scores.len())
                    .map(|_| scores[rng.random_range(0..scores.len())])
                    .collect();
                mean_score(&sample).expect("non-empty resample")
            })
            .collect();
        let bounds = |pick: fn(&RougeScore) -> f64| {
            let mut v: Vec<f64> = means.iter().map(pick).collect();
            v.sort_by(f64::total_cmp);
            Interval {
                lower: quantile_sorted(&v, 0.025).clamp(0.0, 1.0),
                upper: quantile_sorted(&v, 0.975).clamp(0.0, 1.0),
            }
        };
        ScoreInterval {
            precision: bounds(|s| s.precision),
            recall: bounds(|s| s.recall),
            f1: bounds(|s| s.f1),
        }
    });
    Ok(Aggregate { mean, interval })
}

/// Linear-interpolation quantile of an ascending slice.
pub(crate) fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let pos = q * (n - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Exponential-time reference: enumerate every subsequence of the shorter
    /// input and keep the longest one that is also a subsequence of the other.
    fn brute_force_lcs(a: &[&str], b: &[&str]) -> usize {
        let (short, long) = if a.len() <= b.len() { (a, b) } else { (b, a) };
        let mut best = 0;
        for mask in 0u32..(1 << short.len()) {
            let sub: Vec<&str> = (0..short.len())
                .filter(|i| mask & (1 << i) != 0)
                .map(|i| short[i])
                .collect();
            let mut it = long.iter();
            if sub.iter().all(|t| it.any(|x| x == t)) {
                best = best.max(sub.len());
            }
        }
        best
    }

    #[test]
    fn lcs_examples() {
        assert_eq!(
            lcs_length(&["the", "cat", "sat"], &["the", "cat", "sat"]),
            3
        );
        assert_eq!(lcs_length(&["a", "b"], &["c", "d"]), 0);
        let a = ["the", "cat", "sat", "on", "mat"];
        let b = ["the", "cat", "on", "mat"];
        assert_eq!(brute_force_lcs(&a, &b), 4);
        assert_eq!(lcs_length(&a, &b), 4);
        assert_eq!(lcs_length::<&str>(&[], &["x"]), 0);
    }

    #[test]
    fn rouge_n_bigram_fixture() {
        // candidate bigrams {ab, bd}, reference {ab, bc, cd}: one shared.
        let s = rouge_n(&["a", "b", "d"], &["a", "b", "c", "d"], 2).unwrap();
        assert_eq!(s.precision, 0.5);
        assert!((s.recall - 1.0 / 3.0).abs() < 1e-15);
        assert!((s.f1 - 0.4).abs() < 1e-9);
    }

    #[test]
    fn rouge_n_edge_cases() {
        let a = ["x", "y", "z"];
        for n in 1..=3 {
            let s = rouge_n(&a, &a, n).unwrap();
            assert_eq!((s.precision, s.recall, s.f1), (1.0, 1.0, 1.0));
        }
        assert_eq!(rouge_n(&["a"], &["a", "b"], 2).unwrap(), RougeScore::ZERO);
        assert_eq!(rouge_n(&["a"], &["a"], 0), Err(RougeError::InvalidN(0)));
        // clipped counts: "a a a" vs "a" overlaps once
        let s = rouge_n(&["a", "a", "a"], &["a"], 1).unwrap();
        assert!((s.precision - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(s.recall, 1.0);
    }

    #[test]
    fn rouge_l_fixture() {
        let s = rouge_l(
            &["the", "cat", "on", "mat"],
            &["the", "cat", "sat", "on", "mat"],
        );
        assert_eq!(s.precision, 1.0);
        assert_eq!(s.recall, 0.8);
        assert!((s.f1 - 16.0 / 18.0).abs() < 1e-9);
        assert_eq!(rouge_l(&["x"], &["y"]), RougeScore::ZERO);
        assert_eq!(rouge_l::<&str>(&[], &[]), RougeScore::ZERO);
        assert_eq!(rouge_l(&["a", "b"], &["a", "b"]).f1, 1.0);
    }

    #[test]
    fn rouge_lsum_fixture() {
        let opts = ScoringOptions::default();
        let s = rouge_lsum("a b. c d.", "a b. e f.", &opts);
        assert_eq!((s.precision, s.recall, s.f1), (0.5, 0.5, 0.5));
        let text = "Mild cardiomegaly. No evidence of pneumonia.";
        assert_eq!(rouge_lsum(text, text, &opts).f1, 1.0);
    }

    #[test]
    fn rouge_lsum_single_sentence_matches_rouge_l() {
        let opts = ScoringOptions::default();
        let cand = "the cat on the mat";
        let refs = "the cat sat on a mat";
        let l = rouge_l(&opts.tokens(cand), &opts.tokens(refs));
        assert_eq!(rouge_lsum(cand, refs, &opts), l);
    }

    #[test]
    fn lsum_credits_candidate_tokens_once() {
        // Both reference sentences want "a"; the candidate holds only one.
        let cand = vec![vec!["a"]];
        let refs = vec![vec!["a"], vec!["a"]];
        let s = rouge_lsum_sentences(&cand, &refs);
        assert_eq!(s.precision, 1.0);
        assert_eq!(s.recall, 0.5);
    }

    #[test]
    fn aggregate_means_and_intervals() {
        let s = |f1| RougeScore {
            precision: f1,
            recall: f1,
            f1,
        };
        let agg = aggregate_scores(&[s(0.4), s(0.6)], None).unwrap();
        assert!((agg.mean.f1 - 0.5).abs() < 1e-15);
        assert!(agg.interval.is_none());

        let cfg = BootstrapConfig {
            resamples: 200,
            seed: 9,
        };
        let one = aggregate_scores(&[s(0.3)], Some(&cfg)).unwrap();
        let iv = one.interval.unwrap();
        assert_eq!((iv.f1.lower, iv.f1.upper), (0.3, 0.3));

        let same = vec![s(0.7); 100];
        let agg = aggregate_scores(&same, Some(&cfg)).unwrap();
        assert_eq!(agg.interval.unwrap().f1.width(), 0.0);

        assert_eq!(aggregate_scores(&[], None), Err(RougeError::EmptyScoreList));
    }

    #[test]
    fn bootstrap_is_seeded() {
        let scores: Vec<RougeScore> = (0..30)
            .map(|i| RougeScore::from_precision_recall(i as f64 / 30.0, 0.5))
            .collect();
        let cfg = BootstrapConfig {
            resamples: 300,
            seed: 4,
        };
        let a = aggregate_scores(&scores, Some(&cfg)).unwrap();
        let b = aggregate_scores(&scores, Some(&cfg)).unwrap();
        assert_eq!(a, b);
        let iv = a.interval.unwrap().precision;
        assert!(
            0.0 <= iv.lower
                && iv.lower <= a.mean.precision
                && a.mean.precision <= iv.upper
                && iv.upper <= 1.0
        );
    }

    #[test]
    fn metric_names_round_trip() {
        for m in Metric::ALL {
            assert_eq!(m.name().parse::<Metric>().unwrap(), m);
        }
    }

    fn small_seq() -> impl Strategy<Value = Vec<u8>> {
        prop::collection::vec(0u8..4, 0..12)
    }

    proptest! {
        #[test]
        fn lcs_matches_brute_force(a in small_seq(), b in small_seq()) {
            let sa: Vec<String> = a.iter().map(|x| x.to_string()).collect();
            let sb: Vec<String> = b.iter().map(|x| x.to_string()).collect();
            let ra: Vec<&str> = sa.iter().map(String::as_str).collect();
            let rb: Vec<&str> = sb.iter().map(String::as_str).collect();
            prop_assert_eq!(lcs_length(&a, &b), brute_force_lcs(&ra, &rb));
        }

        #[test]
        fn row_width_paths_agree_with_full_table(
            a in prop::collection::vec(0u8..5, 0..160),
            b in prop::collection::vec(0u8..5, 0..160),
        ) {
            // Covers both the bit-parallel row (<= 64) and the wide DP row.
            prop_assert_eq!(lcs_length(&a, &b), lcs_reference_positions(&a, &b).len());
            prop_assert_eq!(lcs_length(&b, &a), lcs_length(&a, &b));
        }

        #[test]
        fn lcs_bounds(a in small_seq(), b in small_seq()) {
            prop_assert_eq!(lcs_length(&a, &a), a.len());
            prop_assert!(lcs_length(&a, &b) <= a.len().min(b.len()));
        }

        #[test]
        fn scores_in_unit_interval(a in small_seq(), b in small_seq(), n in 1usize..4) {
            for s in [rouge_l(&a, &b), rouge_n(&a, &b, n).unwrap()] {
                for v in [s.precision, s.recall, s.f1] {
                    prop_assert!((0.0..=1.0).contains(&v));
                }
                prop_assert!(s.f1 <= s.precision.max(s.recall) + 1e-15);
            }
        }

        #[test]
        fn rouge_l_f1_symmetric(a in small_seq(), b in small_seq()) {
            let ab = rouge_l(&a, &b);
            let ba = rouge_l(&b, &a);
            prop_assert_eq!(ab.f1, ba.f1);
            prop_assert_eq!(ab.precision, ba.recall);
        }

        #[test]
        fn appending_unmatched_token_never_raises_precision(a in small_seq(), b in small_seq()) {
            let before = rouge_l(&a, &b);
            let mut longer = a.clone();
            longer.push(99);
            let after = rouge_l(&longer, &b);
            prop_assert!(after.precision <= before.precision);
        }

        #[test]
        fn lsum_reference_positions_form_an_lcs(a in small_seq(), b in small_seq()) {
            let pos = lcs_reference_positions(&a, &b);
            prop_assert_eq!(pos.len(), lcs_length(&a, &b));
            prop_assert!(pos.windows(2).all(|w| w[0] < w[1]));
        }
    }
}
