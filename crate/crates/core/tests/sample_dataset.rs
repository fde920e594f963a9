use std::path::{Path, PathBuf};

use protoeval_core::dataset::{compute_stats, load_dataset, DatasetStats, RegexTokenizer};
use protoeval_core::dsl::{validate, ValidationPolicy};

fn repo_path(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

#[test]
fn bundled_sample_loads_cleanly() {
    let ds = load_dataset(&repo_path("sample")).unwrap();
    assert_eq!(ds.records.len(), 5);
    assert!(ds.excluded.is_empty(), "{:?}", ds.excluded);
    let policy = ValidationPolicy::default();
    for r in &ds.records {
        assert_eq!(validate(&r.gold_program, &r.library, &policy), vec![], "{}", r.id);
    }
}

#[test]
fn sample_statistics_match_hand_counts() {
    let ds = load_dataset(&repo_path("sample")).unwrap();
    let stats = compute_stats(&ds.records, &RegexTokenizer).unwrap();
    // 27 steps, 380 step tokens, 83 description tokens, 26 functions, 36 calls
    assert_eq!(
        stats,
        DatasetStats {
            protocol_count: 5,
            avg_steps: 27.0 / 5.0,
            avg_protocol_tokens: 380.0 / 5.0,
            avg_tokens_per_step: 380.0 / 27.0,
            avg_tokens_original_description: 83.0 / 5.0,
            avg_tokens_generated_description: None,
            avg_pseudofunctions_per_protocol: 26.0 / 5.0,
            avg_pseudofunctions_per_step: 26.0 / 27.0,
            avg_pseudocode_lines: 36.0 / 5.0,
        }
    );
}

#[test]
fn two_protocol_fixture_statistics_match_hand_counts() {
    let ds = load_dataset(&Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/two_protocols.json")).unwrap();
    let stats = compute_stats(&ds.records, &RegexTokenizer).unwrap();
    // step tokens 5+4+5 and 5+3+4+3+4; descriptions 4 and 8; one generated description of 4
    assert_eq!(
        stats,
        DatasetStats {
            protocol_count: 2,
            avg_steps: 4.0,
            avg_protocol_tokens: 16.5,
            avg_tokens_per_step: 4.125,
            avg_tokens_original_description: 6.0,
            avg_tokens_generated_description: Some(4.0),
            avg_pseudofunctions_per_protocol: 2.5,
            avg_pseudofunctions_per_step: 0.625,
            avg_pseudocode_lines: 3.0,
        }
    );
}
