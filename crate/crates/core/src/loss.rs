//! Objective-value evaluators for sequence decoders.
//!
//! [`embedding_distance_loss`] weights, at every decoding step, the Euclidean
//! distance between each vocabulary word's embedding and the reference
//! word's embedding by the probability the model assigned to that word:
//!
//! ```text
//! loss = sum_i sum_k p_i[k] * ||E(V_k) - E(ref_i)||
//! ```
//!
//! `p_i` is read as the step-`i` predictive distribution over the vocabulary
//! (conditioned on the prefix and the input). No gradients are computed;
//! these functions exist to check an external trainer's objective.

use std::collections::HashMap;
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum LossError {
    #[error("vector dimensions differ ({0} vs {1})")]
    DimensionMismatch(usize, usize),
    #[error("{distributions} distributions for {reference} reference words")]
    LengthMismatch {
        distributions: usize,
        reference: usize,
    },
    #[error("reference word {0:?} is not in the vocabulary")]
    UnknownReferenceWord(String),
    #[error("step {step}: {reason}")]
    InvalidDistribution { step: usize, reason: String },
    #[error("embedding table: {0}")]
    InvalidTable(String),
}

pub fn euclidean_distance(u: &[f64], v: &[f64]) -> Result<f64, LossError> {
    if u.len() != v.len() {
        return Err(LossError::DimensionMismatch(u.len(), v.len()));
    }
    Ok(u.iter()
        .zip(v)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    vocab: Vec<String>,
    vectors: Vec<Vec<f64>>,
    index: HashMap<String, usize>,
}

impl EmbeddingTable {
    pub fn new(entries: Vec<(String, Vec<f64>)>) -> Result<Self, LossError> {
        let dim = entries
            .first()
            .map(|(_, v)| v.len())
            .ok_or_else(|| LossError::InvalidTable("empty vocabulary".into()))?;
        if dim == 0 {
            return Err(LossError::InvalidTable(
                "vectors must have dimension >= 1".into(),
            ));
        }
        let mut index = HashMap::with_capacity(entries.len());
        let mut vocab = Vec::with_capacity(entries.len());
        let mut vectors = Vec::with_capacity(entries.len());
        for (i, (word, vec)) in entries.into_iter().enumerate() {
            if vec.len() != dim {
                return Err(LossError::InvalidTable(format!(
                    "{word:?} has dimension {}, expected {dim}",
                    vec.len()
                )));
            }
            if index.insert(word.clone(), i).is_some() {
                return Err(LossError::InvalidTable(format!("duplicate word {word:?}")));
            }
            vocab.push(word);
            vectors.push(vec);
        }
        Ok(Self {
            vocab,
            vectors,
            index,
        })
    }

    /// Reads `word v1 v2 ... vd` lines. Blank lines are skipped.
    pub fn from_reader<R: BufRead>(reader: R) -> Result<Self, LossError> {
        let mut entries = Vec::new();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| LossError::InvalidTable(e.to_string()))?;
            let mut parts = line.split_whitespace();
            let Some(word) = parts.next() else { continue };
            let vec = parts
                .map(str::parse::<f64>)
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| LossError::InvalidTable(format!("line {}: {e}", lineno + 1)))?;
            entries.push((word.to_string(), vec));
        }
        Self::new(entries)
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn dim(&self) -> usize {
        self.vectors[0].len()
    }

    pub fn len(&self) -> usize {
        self.vocab.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocab.is_empty()
    }

    pub fn index_of(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn vector(&self, idx: usize) -> &[f64] {
        &self.vectors[idx]
    }

    /// Same vocabulary, every vector passed through `f`.
    pub fn map_vectors(&self, f: impl Fn(&[f64]) -> Vec<f64>) -> Result<Self, LossError> {
        Self::new(
            self.vocab
                .iter()
                .cloned()
                .zip(self.vectors.iter().map(|v| f(v)))
                .collect(),
        )
    }
}

/// One decoding step's probabilities over the table's vocabulary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PredictedDistribution {
    pub probs: Vec<f64>,
}

impl From<Vec<f64>> for PredictedDistribution {
    fn from(probs: Vec<f64>) -> Self {
        Self { probs }
    }
}

pub const PROB_SUM_TOLERANCE: f64 = 1e-9;

fn check_inputs(
    dists: &[PredictedDistribution],
    reference: &[String],
    table: &EmbeddingTable,
) -> Result<Vec<usize>, LossError> {
    if dists.len() != reference.len() {
        return Err(LossError::LengthMismatch {
            distributions: dists.len(),
            reference: reference.len(),
        });
    }
    for (step, d) in dists.iter().enumerate() {
        let bad = |reason: String| LossError::InvalidDistribution { step, reason };
        if d.probs.len() != table.len() {
            return Err(bad(format!(
                "{} probabilities for a vocabulary of {}",
                d.probs.len(),
                table.len()
            )));
        }
        if d.probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(bad("probabilities must be finite and non-negative".into()));
        }
        let sum: f64 = d.probs.iter().sum();
        if (sum - 1.0).abs() > PROB_SUM_TOLERANCE {
            return Err(bad(format!("probabilities sum to {sum}")));
        }
    }
    reference
        .iter()
        .map(|w| {
            table
                .index_of(w)
                .ok_or_else(|| LossError::UnknownReferenceWord(w.clone()))
        })
        .collect()
}

pub fn embedding_distance_loss(
    dists: &[PredictedDistribution],
    reference: &[String],
    table: &EmbeddingTable,
) -> Result<f64, LossError> {
    let ref_idx = check_inputs(dists, reference, table)?;
    let mut total = 0.0;
    for (dist, &r) in dists.iter().zip(&ref_idx) {
        let target = table.vector(r);
        for (k, &p) in dist.probs.iter().enumerate() {
            if p != 0.0 {
                total += p * euclidean_distance(table.vector(k), target)?;
            }
        }
    }
    Ok(total)
}

pub const LOG_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reduction {
    #[default]
    Sum,
    Mean,
}

/// Negative log-likelihood of the reference words. Probabilities are
/// clamped at [`LOG_CLAMP`] before the log.
pub fn cross_entropy_loss(
    dists: &[PredictedDistribution],
    reference: &[String],
    table: &EmbeddingTable,
    reduction: Reduction,
) -> Result<f64, LossError> {
    let ref_idx = check_inputs(dists, reference, table)?;
    let total: f64 = dists
        .iter()
        .zip(&ref_idx)
        .map(|(d, &r)| -d.probs[r].max(LOG_CLAMP).ln())
        .sum();
    Ok(match reduction {
        Reduction::Sum => total,
        Reduction::Mean if ref_idx.is_empty() => 0.0,
        Reduction::Mean => total / ref_idx.len() as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn words(ws: &[&str]) -> Vec<String> {
        ws.iter().map(|w| w.to_string()).collect()
    }

    fn two_word_table() -> EmbeddingTable {
        EmbeddingTable::new(vec![
            ("w1".into(), vec![0.0, 0.0]),
            ("w2".into(), vec![3.0, 4.0]),
        ])
        .unwrap()
    }

    #[test]
    fn distance_examples() {
        assert_eq!(euclidean_distance(&[0.0, 0.0], &[3.0, 4.0]), Ok(5.0));
        assert_eq!(euclidean_distance(&[1.5, -2.0], &[1.5, -2.0]), Ok(0.0));
        assert_eq!(euclidean_distance(&[1.0], &[4.0]), Ok(3.0));
        assert_eq!(
            euclidean_distance(&[1.0], &[1.0, 2.0]),
            Err(LossError::DimensionMismatch(1, 2))
        );
    }

    #[test]
    fn weighted_distance_fixture() {
        let t = two_word_table();
        let d = vec![PredictedDistribution::from(vec![0.8, 0.2])];
        assert_eq!(embedding_distance_loss(&d, &words(&["w1"]), &t), Ok(1.0));
        let two = vec![d[0].clone(), d[0].clone()];
        assert_eq!(
            embedding_distance_loss(&two, &words(&["w1", "w1"]), &t),
            Ok(2.0)
        );
        let point = vec![vec![1.0, 0.0].into(), vec![0.0, 1.0].into()];
        assert_eq!(
            embedding_distance_loss(&point, &words(&["w1", "w2"]), &t),
            Ok(0.0)
        );
    }

    #[test]
    fn loss_input_errors() {
        let t = two_word_table();
        let d = vec![PredictedDistribution::from(vec![0.5, 0.5])];
        assert!(matches!(
            embedding_distance_loss(&d, &words(&["w1", "w2"]), &t),
            Err(LossError::LengthMismatch { .. })
        ));
        assert_eq!(
            embedding_distance_loss(&d, &words(&["w9"]), &t),
            Err(LossError::UnknownReferenceWord("w9".into()))
        );
        let bad = vec![PredictedDistribution::from(vec![0.5, 0.6])];
        assert!(matches!(
            cross_entropy_loss(&bad, &words(&["w1"]), &t, Reduction::Sum),
            Err(LossError::InvalidDistribution { step: 0, .. })
        ));
        let neg = vec![PredictedDistribution::from(vec![1.5, -0.5])];
        assert!(embedding_distance_loss(&neg, &words(&["w1"]), &t).is_err());
    }

    #[test]
    fn cross_entropy_examples() {
        let t = EmbeddingTable::new((0..4).map(|i| (format!("w{i}"), vec![i as f64])).collect())
            .unwrap();
        let uniform = vec![PredictedDistribution::from(vec![0.25; 4])];
        let ce = cross_entropy_loss(&uniform, &words(&["w2"]), &t, Reduction::Sum).unwrap();
        assert!((ce - 4f64.ln()).abs() < 1e-12);
        let point = vec![PredictedDistribution::from(vec![0.0, 1.0, 0.0, 0.0])];
        assert_eq!(
            cross_entropy_loss(&point, &words(&["w1"]), &t, Reduction::Sum),
            Ok(0.0)
        );
        let zero = cross_entropy_loss(&point, &words(&["w0"]), &t, Reduction::Sum).unwrap();
        assert_eq!(zero, -LOG_CLAMP.ln());
        let two = vec![uniform[0].clone(), point[0].clone()];
        let mean = cross_entropy_loss(&two, &words(&["w3", "w1"]), &t, Reduction::Mean).unwrap();
        assert!((mean - 4f64.ln() / 2.0).abs() < 1e-12);
    }

    #[test]
    fn reads_text_format() {
        let text = "w1 0 0\n\nw2 3 4\n";
        let t = EmbeddingTable::from_reader(text.as_bytes()).unwrap();
        assert_eq!(t, two_word_table());
        assert_eq!(t.dim(), 2);
        assert!(EmbeddingTable::from_reader("a 1 2\nb 1\n".as_bytes()).is_err());
        assert!(EmbeddingTable::from_reader("a 1\na 2\n".as_bytes()).is_err());
        assert!(EmbeddingTable::from_reader("a x\n".as_bytes()).is_err());
        assert!(EmbeddingTable::from_reader("a\n".as_bytes()).is_err());
        assert!(EmbeddingTable::from_reader("".as_bytes()).is_err());
    }

    /// (embedding vectors, per-step (unnormalized weights, reference index))
    type Case = (Vec<Vec<f64>>, Vec<(Vec<f64>, usize)>);

    fn table_and_dists() -> impl Strategy<Value = Case> {
        (2usize..6).prop_flat_map(|v| {
            (
                prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 2), v),
                prop::collection::vec((prop::collection::vec(0.01f64..1.0, v), 0..v), 1..6),
            )
        })
    }

    fn build(
        vectors: &[Vec<f64>],
        steps: &[(Vec<f64>, usize)],
    ) -> (EmbeddingTable, Vec<PredictedDistribution>, Vec<String>) {
        let table = EmbeddingTable::new(
            vectors
                .iter()
                .enumerate()
                .map(|(i, v)| (format!("w{i}"), v.clone()))
                .collect(),
        )
        .unwrap();
        let dists = steps
            .iter()
            .map(|(w, _)| {
                let s: f64 = w.iter().sum();
                PredictedDistribution::from(w.iter().map(|x| x / s).collect::<Vec<_>>())
            })
            .collect();
        let refs = steps.iter().map(|(_, r)| format!("w{r}")).collect();
        (table, dists, refs)
    }

    proptest! {
        #[test]
        fn losses_are_additive((vectors, steps) in table_and_dists(), cut in 0usize..6) {
            let (table, dists, refs) = build(&vectors, &steps);
            let cut = cut.min(dists.len());
            let whole = embedding_distance_loss(&dists, &refs, &table).unwrap();
            let parts = embedding_distance_loss(&dists[..cut], &refs[..cut], &table).unwrap()
                + embedding_distance_loss(&dists[cut..], &refs[cut..], &table).unwrap();
            prop_assert!((whole - parts).abs() <= 1e-12 * whole.max(1.0));
            let ce = cross_entropy_loss(&dists, &refs, &table, Reduction::Sum).unwrap();
            let ce_parts = cross_entropy_loss(&dists[..cut], &refs[..cut], &table, Reduction::Sum).unwrap()
                + cross_entropy_loss(&dists[cut..], &refs[cut..], &table, Reduction::Sum).unwrap();
            prop_assert!((ce - ce_parts).abs() <= 1e-12 * ce.max(1.0));
            prop_assert!(whole >= 0.0 && ce >= 0.0);
        }

        #[test]
        fn invariant_under_isometry(
            (vectors, steps) in table_and_dists(),
            angle in 0.0f64..std::f64::consts::TAU,
            dx in -10.0f64..10.0, dy in -10.0f64..10.0,
        ) {
            let (table, dists, refs) = build(&vectors, &steps);
            let (s, c) = angle.sin_cos();
            let moved = table
                .map_vectors(|v| vec![c * v[0] - s * v[1] + dx, s * v[0] + c * v[1] + dy])
                .unwrap();
            let a = embedding_distance_loss(&dists, &refs, &table).unwrap();
            let b = embedding_distance_loss(&dists, &refs, &moved).unwrap();
            prop_assert!((a - b).abs() < 1e-9 * a.max(1.0));
        }

        #[test]
        fn moving_mass_closer_never_increases_loss(
            (vectors, steps) in table_and_dists(),
            frac in 0.0f64..1.0,
        ) {
            let (table, dists, refs) = build(&vectors, &steps[..1]);
            let r = table.index_of(&refs[0]).unwrap();
            let target = table.vector(r).to_vec();
            let dist = |k: usize| euclidean_distance(table.vector(k), &target).unwrap();
            let far = (0..table.len()).max_by(|&a, &b| dist(a).total_cmp(&dist(b))).unwrap();
            let near = (0..table.len()).min_by(|&a, &b| dist(a).total_cmp(&dist(b))).unwrap();
            let mut probs = dists[0].probs.clone();
            let moved = probs[far] * frac;
            probs[far] -= moved;
            probs[near] += moved;
            let before = embedding_distance_loss(&dists, &refs, &table).unwrap();
            let after = embedding_distance_loss(&[probs.into()], &refs, &table).unwrap();
            prop_assert!(after <= before + 1e-12);
        }
    }
}
