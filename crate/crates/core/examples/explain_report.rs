// Render the auditor report from a handful of labels and score its coverage.

use std::path::Path;

use risktagger::explainer::{coverage, generate_report, ExplainInput, ExplainOptions, ReportChecklist};
use risktagger::extractor::{extract_document, ExtractOptions, PatternBackend};
use risktagger::model::{normalize_address, ChainId, RiskAssessment, RiskDimension, SuspicionLevel};
use risktagger::prompts::PromptRegistry;

fn label(hex: &str, level: SuspicionLevel, hop: u32, flow: &str) -> anyhow::Result<RiskAssessment> {
    let quiet = RiskDimension::new("No anomaly", "");
    Ok(RiskAssessment {
        target_address: normalize_address(hex, &ChainId::ethereum())?,
        suspicion_level: level,
        transaction_patterns: quiet.clone(),
        fund_flows: RiskDimension::new(flow, "many senders, fast fan-out"),
        associated_addresses: quiet.clone(),
        temporal_signs: quiet,
        justification: String::new(),
        gaps: String::new(),
        out_neighbors: Vec::new(),
        hop_depth: hop,
        reflection_issues: Vec::new(),
        reasoner_backend: "rules".into(),
    })
}

pub fn run_example() -> anyhow::Result<()> {
    let prompts = PromptRegistry::builtin();
    let doc = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/bybit_incident.txt"))?;
    let clues = extract_document(&doc, &PatternBackend, &prompts, &ExtractOptions::default())?.clues;
    let l_all = vec![
        label("0x47666fab8bd0ac7003bce3f5c3585383f09486e2", SuspicionLevel::High, 0, "Suspicious fund flow")?,
        label("0x00000000000000000000000000000000000000a1", SuspicionLevel::Medium, 1, "Suspicious fund flow")?,
        label("0x00000000000000000000000000000000000000a2", SuspicionLevel::NoSuspicion, 1, "No anomaly")?,
    ];
    let input = ExplainInput {
        clues: &clues,
        l_all: &l_all,
        r_final: &l_all[..1],
        normal_controls: Some(3),
    };
    let report = generate_report(&input, None, &prompts, &ExplainOptions::default())?;
    println!("{}", report.markdown);
    let cov = coverage(&report.markdown, &ReportChecklist::from_clues(&clues))?;
    println!("coverage {} ({} full, {} partial of {})", cov.r_coverage, cov.e_full, cov.e_part, cov.e_all);
    anyhow::ensure!(cov.r_coverage == 1.0);
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run_example()
}
