mod common;

use std::fs;
use std::path::Path;

use common::checks;
use risktagger::model::{RiskAssessment, SuspicionLevel};
use risktagger::tracer::{level_histogram, read_labels};

#[test]
fn end_to_end_is_byte_identical() {
    checks::determinism().unwrap();
}

#[test]
fn resume_after_hop_three_matches_straight_run() {
    checks::resume_matches(3).unwrap();
}

#[test]
fn second_live_run_is_served_from_cache() {
    let (first, second) = checks::cache_soundness().unwrap();
    assert!(first > 0);
    assert_eq!(second, 0);
}

fn snapshot(labels: &[RiskAssessment]) -> String {
    labels
        .iter()
        .map(|r| format!("{}\t{}\t{}\t{}\n", r.target_address.chain(), r.target_address.hex(), r.hop_depth, r.suspicion_level))
        .collect()
}

pub fn golden_path() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/fixture_labels.tsv")
}

/// Set `UPDATE_GOLDEN=1` to rewrite the snapshot after an intended change.
#[test]
fn fixture_labels_match_golden_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    checks::run_into(dir.path()).unwrap();
    let labels = read_labels(&dir.path().join("labels.jsonl")).unwrap();
    let got = snapshot(&labels);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        fs::write(golden_path(), &got).unwrap();
    }
    assert_eq!(got, fs::read_to_string(golden_path()).unwrap());
    let h = level_histogram(&labels);
    for level in SuspicionLevel::ALL {
        assert!(h[&level] > 0, "{level} missing from {h:?}");
    }
}
