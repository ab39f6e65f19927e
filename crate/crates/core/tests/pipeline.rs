//! Whole-pipeline use of the public API.

use radsum_core::augment::{
    expand_corpus, make_schedule, ErrorPolicy, ExamplePair, RenderTemplate,
};
use radsum_core::dataset::{collate, filter_complete, split, CollateConfig};
use radsum_core::ingest::{parse_report, SectionName};
use radsum_core::rouge::{score_pairs, BootstrapConfig, PredictionRecord, ScoringOptions};
use radsum_core::ShuffleMode;

fn corpus_text(i: usize) -> String {
    let mut text = format!(
        "COMPARISON: Prior study ____\nFINDINGS: Finding {i}. Heart size is normal.\nIMPRESSION: Impression {i}.\n"
    );
    if i % 3 != 0 {
        text += "INDICATION: Cough.\n";
    }
    text += "TECHNIQUE: Chest PA and lateral\n";
    text
}

#[test]
fn corpus_to_batches() {
    let reports: Vec<_> = (0..30)
        .map(|i| parse_report(&format!("r{i:02}"), &corpus_text(i)).unwrap())
        .collect();
    let (kept, drops) = filter_complete(reports, &SectionName::default_input_fields());
    assert_eq!(drops.kept + drops.dropped, 30);
    assert_eq!(drops.dropped_by_field.get("INDICATION"), Some(&10));

    let ids: Vec<String> = kept.iter().map(|r| r.report_id.clone()).collect();
    let manifest = split(&ids, 0.8, 4).unwrap();
    assert_eq!(manifest.train_ids.len(), 16);

    let train: Vec<_> = kept
        .iter()
        .filter(|r| manifest.train_ids.contains(&r.report_id))
        .cloned()
        .collect();
    let schedule = make_schedule(
        SectionName::default_input_fields(),
        6,
        3,
        4,
        ShuffleMode::PerEpoch,
    )
    .unwrap();
    let expansion = expand_corpus(
        &train,
        &schedule,
        &RenderTemplate::default(),
        ErrorPolicy::FailFast,
    )
    .unwrap();
    assert_eq!(expansion.pairs.len(), 16 * 6);

    let batch: Vec<ExamplePair> = expansion.pairs[..8]
        .iter()
        .map(|p| ExamplePair {
            pair_id: p.pair_id.clone(),
            input_text: p.input.clone(),
            target_text: p.target.clone(),
        })
        .collect();
    let collated = collate(&batch, &CollateConfig::default()).unwrap();
    assert_eq!(collated.input_tokens.len(), 8);
    assert_eq!(collated.decoder_input[0][0], "<s>");
}

#[test]
fn bootstrap_is_independent_of_pool_size() {
    let records: Vec<PredictionRecord> = (0..200)
        .map(|i| PredictionRecord {
            pair_id: i.to_string(),
            candidate: format!("no acute process {}", i % 7),
            reference: format!("no acute cardiopulmonary process {}", i % 5),
        })
        .collect();
    let cfg = BootstrapConfig {
        resamples: 300,
        seed: 12,
    };
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| score_pairs(&records, &ScoringOptions::default(), Some(&cfg)).unwrap())
    };
    let one = run(1);
    let many = run(5);
    assert_eq!(
        serde_json::to_string(&one).unwrap(),
        serde_json::to_string(&many).unwrap()
    );
    assert!(one.intervals.is_some());
}
