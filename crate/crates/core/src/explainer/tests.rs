use super::*;
use crate::backend::BackendError;
use crate::extractor::{extract_document, ExtractOptions, PatternBackend};
use crate::model::{normalize_address, ChainId, RiskDimension};

fn bybit() -> CaseClues {
    let doc = include_str!("../../fixtures/bybit_incident.txt");
    extract_document(doc, &PatternBackend, &PromptRegistry::builtin(), &ExtractOptions::default())
        .unwrap()
        .clues
}

fn label(n: u8, level: SuspicionLevel, layer: u32) -> RiskAssessment {
    let risky = RiskDimension::new("Suspicious fund flow", format!("evidence {n}"));
    let clear = RiskDimension::new("No anomaly", "");
    let on = |b: bool| if b { risky.clone() } else { clear.clone() };
    let fired = match level {
        SuspicionLevel::High => [true, true, false, false],
        SuspicionLevel::Medium => [false, true, false, false],
        SuspicionLevel::Low => [false, false, false, true],
        SuspicionLevel::NoSuspicion => [false; 4],
    };
    RiskAssessment {
        target_address: normalize_address(&format!("0x{n:040x}"), &ChainId::ethereum()).unwrap(),
        suspicion_level: level,
        transaction_patterns: on(fired[0]),
        fund_flows: on(fired[1]),
        associated_addresses: on(fired[2]),
        temporal_signs: on(fired[3]),
        justification: String::new(),
        gaps: String::new(),
        out_neighbors: Vec::new(),
        hop_depth: layer,
        reflection_issues: Vec::new(),
        reasoner_backend: "rules".into(),
    }
}

/// High 2, Medium 1, Low 3, No Suspicion 4.
fn ten() -> Vec<RiskAssessment> {
    use SuspicionLevel::*;
    [High, High, Medium, Low, Low, Low, NoSuspicion, NoSuspicion, NoSuspicion, NoSuspicion]
        .into_iter()
        .enumerate()
        .map(|(i, l)| label(i as u8 + 1, l, i as u32 / 3))
        .collect()
}

fn highs(l: &[RiskAssessment]) -> Vec<RiskAssessment> {
    l.iter().filter(|r| r.suspicion_level == SuspicionLevel::High).cloned().collect()
}

fn section<'a>(md: &'a str, n: usize) -> &'a str {
    let start = md.find(&format!("## {}. ", n)).unwrap();
    let end = md[start + 3..].find("\n## ").map_or(md.len(), |i| start + 3 + i);
    &md[start..end]
}

#[test]
fn statistics_section_counts_and_shares() {
    let (clues, l_all) = (bybit(), ten());
    let r_final = highs(&l_all);
    let input = ExplainInput {
        clues: &clues,
        l_all: &l_all,
        r_final: &r_final,
        normal_controls: Some(10),
    };
    let md = render_template(&input);
    assert_eq!(section_headings(&md).len(), 8);
    let stats = section(&md, 3);
    assert!(stats.contains("| High | 2 | 20.0% | 33.3% |"), "{stats}");
    assert!(stats.contains("| No Suspicion | 4 | 40.0% | n/a |"));
    assert!(stats.contains("Normal control accounts: 10"));
    assert!(section(&md, 2).contains("1,500,000,000 USD"));
}

#[test]
fn no_high_accounts_still_eight_sections() {
    let clues = bybit();
    let l_all: Vec<_> = ten().into_iter().filter(|r| r.suspicion_level != SuspicionLevel::High).collect();
    let input = ExplainInput {
        clues: &clues,
        l_all: &l_all,
        r_final: &[],
        normal_controls: None,
    };
    let md = render_template(&input);
    let titles: Vec<String> = SECTION_TITLES.iter().enumerate().map(|(i, t)| format!("{}. {t}", i + 1)).collect();
    assert_eq!(section_headings(&md), titles);
    assert!(section(&md, 4).contains("No high-risk accounts"));
}

#[test]
fn template_mentions_every_checklist_entity() {
    let (clues, l_all) = (bybit(), ten());
    let r_final = highs(&l_all);
    let input = ExplainInput {
        clues: &clues,
        l_all: &l_all,
        r_final: &r_final,
        normal_controls: None,
    };
    let list = ReportChecklist::from_clues(&clues);
    let cov = coverage(&render_template(&input), &list).unwrap();
    assert!(cov.e_all >= 8);
    assert_eq!(cov.e_full, cov.e_all, "{:#?}", cov.entities);
    assert_eq!(cov.r_coverage, 1.0);
}

#[test]
fn percentages_sum_to_one_hundred() {
    for counts in [vec![1, 1, 1], vec![2, 1, 3, 4], vec![7, 0, 0, 0], vec![1, 2, 3, 4, 5, 6, 7]] {
        let p = percentages(&counts);
        let sum: f64 = p.iter().sum();
        assert!((sum - 100.0).abs() < 1e-9, "{counts:?} -> {p:?}");
    }
    assert_eq!(percentages(&[0, 0]), vec![0.0, 0.0]);
    assert_eq!(group_digits(1_500_000_000), "1,500,000,000");
    assert_eq!(group_digits(999), "999");
}

struct Canned(Result<String, ()>);

impl BackendPort for Canned {
    fn complete(&self, prompt: &str, _: f64, _: u32) -> Result<String, BackendError> {
        assert!(prompt.contains("3.Report Generation Explanation"));
        assert!(prompt.contains("\"dataset_summary\""));
        self.0.clone().map_err(|_| BackendError::Failure {
            attempts: 1,
            reason: "down".into(),
        })
    }

    fn tag(&self) -> &str {
        "canned"
    }
}

#[test]
fn backend_report_or_fallback() {
    let (clues, l_all) = (bybit(), ten());
    let input = ExplainInput {
        clues: &clues,
        l_all: &l_all,
        r_final: &[],
        normal_controls: None,
    };
    let reg = PromptRegistry::builtin();
    let good: String = SECTION_TITLES.iter().map(|t| format!("## {t}\ntext\n")).collect();
    let r = generate_report(&input, Some(&Canned(Ok(good.clone()))), &reg, &ExplainOptions::default()).unwrap();
    assert_eq!((r.markdown, r.renderer.as_str()), (good, "canned"));

    let r = generate_report(&input, Some(&Canned(Ok("## only one".into()))), &reg, &ExplainOptions::default()).unwrap();
    assert_eq!(r.renderer, "template");
    assert!(r.fallback_reason.unwrap().contains("expected 8 sections"));

    let strict = ExplainOptions {
        fallback: false,
        ..Default::default()
    };
    assert!(matches!(
        generate_report(&input, Some(&Canned(Err(()))), &reg, &strict),
        Err(ExplainError::Backend(_))
    ));
    assert!(matches!(
        generate_report(&ExplainInput { l_all: &[], ..input }, None, &reg, &strict),
        Err(ExplainError::EmptyTrace)
    ));
}

#[test]
fn rule_backend_declines_and_template_is_used() {
    let (clues, l_all) = (bybit(), ten());
    let input = ExplainInput {
        clues: &clues,
        l_all: &l_all,
        r_final: &[],
        normal_controls: None,
    };
    let backend = crate::reasoner::RuleBackend::default();
    let r = generate_report(&input, Some(&backend), &PromptRegistry::builtin(), &ExplainOptions::default()).unwrap();
    assert_eq!(r.renderer, "template");
    assert_eq!(r.markdown, render_template(&input));
}
