//! Per-account risk inference: prompt assembly, backend call, verdict
//! parsing and a bounded reflection pass.

mod blacklist;
pub mod rules;
pub mod verdict;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use blacklist::Blacklist;
pub use rules::{level_for, rule_backend_assess, RuleBackend, RuleThresholds};
pub use verdict::{indicates_risk, parse_verdict, ParsedVerdict, Verdict};

use crate::backend::{BackendError, BackendPort};
use crate::model::{Address, RiskAssessment, SuspicionLevel};
use crate::prompts::{PromptError, PromptId, PromptRegistry};
use crate::translator::{to_reasoner_payload, AccountSubgraph, ReasonerPayload, TokenDecimals};

/// Heading of the known-labels section appended to the formatted analysis.
pub const KNOWN_LABELS_MARKER: &str = "Known high-risk counterparties (address, label):";

const REVIEW_ADDENDUM: &str = "Reviewer notes on an earlier answer for this address (address them in your new answer):";

#[derive(Debug, Error)]
pub enum ReasonerError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("no JSON object in backend output: {excerpt:?}")]
    UnparseableVerdict { excerpt: String },
    #[error("verdict violates schema at `{key}`: {detail}")]
    SchemaViolation { key: String, detail: String },
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("payload is for {payload} but the prompt targets {target}")]
    TargetMismatch { payload: String, target: String },
    #[error("blacklist line {line}: {detail}")]
    Blacklist { line: usize, detail: String },
}

impl ReasonerError {
    pub(crate) fn schema(key: &str, detail: &str) -> Self {
        ReasonerError::SchemaViolation {
            key: key.to_owned(),
            detail: detail.to_owned(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct KnownLabel {
    pub address: String,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReasonerConfig {
    pub temperature: f64,
    pub max_tokens: u32,
    /// Reflection rounds (`R`).
    pub reflection_rounds: u32,
    pub decimals: TokenDecimals,
}

impl Default for ReasonerConfig {
    fn default() -> Self {
        Self {
            temperature: 0.3,
            max_tokens: 2048,
            reflection_rounds: 1,
            decimals: TokenDecimals::default(),
        }
    }
}

/// Blacklisted counterparties of the retained transactions and cross-chain destinations.
pub fn known_labels(sub: &AccountSubgraph, blacklist: &Blacklist) -> Vec<KnownLabel> {
    let mut hits = BTreeSet::new();
    let parties = sub
        .retained_txs
        .iter()
        .flat_map(|t| [&t.from, &t.to])
        .chain(sub.cross_chain.iter().map(|p| p.destination()));
    for a in parties {
        if a.hex() == sub.center.hex() {
            continue;
        }
        if let Some(label) = blacklist.label(a) {
            hits.insert(KnownLabel {
                address: a.hex().to_owned(),
                label: label.to_owned(),
            });
        }
    }
    hits.into_iter().collect()
}

/// The payload JSON, followed by the known-labels section when there are hits.
pub fn formatted_analysis(payload: &ReasonerPayload, known: &[KnownLabel]) -> String {
    let mut out = payload.render();
    if !known.is_empty() {
        out.push_str("\n\n");
        out.push_str(KNOWN_LABELS_MARKER);
        out.push('\n');
        out.push_str(&serde_json::to_string_pretty(known).expect("serialisable"));
    }
    out
}

pub fn build_cot_prompt(
    prompts: &PromptRegistry,
    payload: &ReasonerPayload,
    target: &Address,
    known: &[KnownLabel],
) -> Result<String, ReasonerError> {
    if payload.target_address.is_empty() {
        return Err(PromptError::MissingPlaceholder {
            template: PromptId::CotPart1,
            name: "target_address".into(),
        }
        .into());
    }
    if payload.target_address != target.hex() {
        return Err(ReasonerError::TargetMismatch {
            payload: payload.target_address.clone(),
            target: target.hex().to_owned(),
        });
    }
    let analysis = formatted_analysis(payload, known);
    let part1 = prompts.render(
        PromptId::CotPart1,
        &[("target_address", target.hex()), ("formatted_analysis", &analysis)],
    )?;
    let part2 = prompts.render(PromptId::CotPart2, &[])?;
    Ok(format!("{part1}\n{part2}"))
}

pub fn build_reflection_prompt(
    prompts: &PromptRegistry,
    target: &Address,
    verdict: &Verdict,
) -> Result<String, ReasonerError> {
    Ok(prompts.render(
        PromptId::Reflection,
        &[("target_address", target.hex()), ("analysis_result", &verdict.to_json())],
    )?)
}

/// Why a verdict should be reviewed, if it should.
pub fn reflection_trigger(parsed: &ParsedVerdict) -> Option<&'static str> {
    let v = &parsed.verdict;
    let risky = v.risk_count();
    match v.suspicion_level {
        SuspicionLevel::High | SuspicionLevel::Medium if risky == 0 => {
            Some("level asserts risk but no dimension reports any")
        }
        SuspicionLevel::NoSuspicion if risky >= 2 => Some("level clears the account but two or more dimensions report risk"),
        _ if parsed.repaired => Some("verdict JSON needed repair"),
        _ => None,
    }
}

fn is_no_flaw(review: &str) -> bool {
    review.to_ascii_lowercase().contains("no flaw")
}

/// Distinct receivers of successful outgoing retained transfers plus
/// cross-chain destinations, excluding the account itself.
pub fn out_neighbors(sub: &AccountSubgraph) -> Vec<Address> {
    let mut seen = BTreeSet::new();
    for t in &sub.retained_txs {
        if t.from.hex() == sub.center.hex() && !t.is_error && t.to.hex() != sub.center.hex() {
            seen.insert(t.to.clone());
        }
    }
    for p in &sub.cross_chain {
        let d = p.destination();
        if d.hex() != sub.center.hex() || d.chain() != sub.center.chain() {
            seen.insert(d.clone());
        }
    }
    seen.into_iter().collect()
}

fn assessment(sub: &AccountSubgraph, v: Verdict, issues: Vec<String>, backend: &str) -> RiskAssessment {
    RiskAssessment {
        target_address: sub.center.clone(),
        suspicion_level: v.suspicion_level,
        transaction_patterns: v.a_transaction_patterns,
        fund_flows: v.b_fund_flows,
        associated_addresses: v.c_associated_addresses,
        temporal_signs: v.d_temporal_behavioral_signs,
        justification: v.justification,
        gaps: v.gaps,
        out_neighbors: out_neighbors(sub),
        hop_depth: 0,
        reflection_issues: issues,
        reasoner_backend: backend.to_owned(),
    }
}

/// CoT pass, then up to `reflection_rounds` review rounds. Each round makes
/// one reflection call and, when issues are raised, one re-issued CoT call.
pub fn infer_risk(
    sub: &AccountSubgraph,
    blacklist: &Blacklist,
    backend: &dyn BackendPort,
    prompts: &PromptRegistry,
    cfg: &ReasonerConfig,
) -> Result<RiskAssessment, ReasonerError> {
    if sub.stats.in_count + sub.stats.out_count == 0 && sub.cross_chain.is_empty() {
        return Ok(assessment(sub, rules::idle_verdict(), Vec::new(), backend.tag()));
    }
    let payload = to_reasoner_payload(sub, &cfg.decimals);
    let known = known_labels(sub, blacklist);
    let cot = build_cot_prompt(prompts, &payload, &sub.center, &known)?;
    let call = |p: &str| backend.complete(p, cfg.temperature, cfg.max_tokens);

    let mut parsed = parse_verdict(&call(&cot)?)?;
    let mut issues = Vec::new();
    for _ in 0..cfg.reflection_rounds {
        let Some(reason) = reflection_trigger(&parsed) else { break };
        tracing::debug!(address = sub.center.hex(), reason, "reflection triggered");
        let review = call(&build_reflection_prompt(prompts, &sub.center, &parsed.verdict)?)?;
        if is_no_flaw(&review) {
            break;
        }
        let review = review.trim().to_owned();
        let reissued = format!("{cot}\n\n{REVIEW_ADDENDUM}\n{review}");
        issues.push(review);
        match parse_verdict(&call(&reissued)?) {
            Ok(p) => parsed = p,
            Err(e) => {
                issues.push(format!("re-assessment discarded: {e}"));
                break;
            }
        }
    }
    Ok(assessment(sub, parsed.verdict, issues, backend.tag()))
}
