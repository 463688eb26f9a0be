//! Deterministic stand-in for a language model, driven by a fixed rule table.
//!
//! | rule | fires when | dimension |
//! |------|------------|-----------|
//! | R1 | a counterparty is on the blacklist | c |
//! | R2 | ≥ 10 distinct senders and, within 3600 s of an inbound transfer, outflows to ≥ 2 receivers | b |
//! | R3 | ≥ 20 transactions in one hour, a nonzero value that is a multiple of 10^21, or one transfer ≥ the large-value threshold | a |
//! | R4 | ≥ 50 % of transactions between 02:00 and 04:00 UTC | d |
//!
//! Two or more dimensions give High; b or c alone gives Medium; a or d
//! alone gives Low; nothing gives No Suspicion.

use std::collections::BTreeSet;

use chrono::{DateTime, Timelike};
use num_bigint::BigUint;
use num_traits::Zero;
use serde::{Deserialize, Serialize};

use super::verdict::{indicates_risk, parse_verdict, Verdict};
use super::{KnownLabel, KNOWN_LABELS_MARKER};
use crate::backend::{BackendError, BackendPort};
use crate::extractor::patterns::answer_extract_prompt;
use crate::jsontext::first_object_from;
use crate::model::{RiskDimension, SuspicionLevel};
use crate::prompts::{placeholder_prefix, PromptId, PromptRegistry};
use crate::translator::{AccountStats, PayloadTx, ReasonerPayload, TokenDecimals};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RuleThresholds {
    pub fan_in_senders: u64,
    pub dispersal_receivers: usize,
    pub dispersal_window_s: u64,
    pub burst_per_hour: u64,
    /// Smallest-unit multiple that counts as a round-number transfer.
    pub round_unit: String,
    /// Smallest-unit value at or above which one transfer counts as large.
    pub large_value: String,
    pub night_start_hour: u32,
    pub night_end_hour: u32,
    pub night_share: f64,
}

impl Default for RuleThresholds {
    fn default() -> Self {
        Self {
            fan_in_senders: 10,
            dispersal_receivers: 2,
            dispersal_window_s: 3600,
            burst_per_hour: 20,
            round_unit: "1000000000000000000000".into(),
            large_value: "1000000000000000000000".into(),
            night_start_hour: 2,
            night_end_hour: 4,
            night_share: 0.5,
        }
    }
}

/// Evidence for each dimension that fired, in a–d order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RuleFindings {
    pub a: Option<String>,
    pub b: Option<String>,
    pub c: Option<String>,
    pub d: Option<String>,
}

impl RuleFindings {
    pub fn fired(&self) -> [bool; 4] {
        [self.a.is_some(), self.b.is_some(), self.c.is_some(), self.d.is_some()]
    }
}

/// The level table, over which dimensions fired (a, b, c, d).
pub fn level_for(fired: [bool; 4]) -> SuspicionLevel {
    let [a, b, c, d] = fired;
    match fired.iter().filter(|f| **f).count() {
        0 => SuspicionLevel::NoSuspicion,
        1 if b || c => SuspicionLevel::Medium,
        1 if a || d => SuspicionLevel::Low,
        _ => SuspicionLevel::High,
    }
}

fn parse_ts(iso: &str) -> Option<i64> {
    DateTime::parse_from_rfc3339(iso).ok().map(|d| d.timestamp())
}

fn raw_value(tx: &PayloadTx, decimals: &TokenDecimals) -> BigUint {
    decimals.parse_display(&tx.value).map(|(v, _)| v).unwrap_or_default()
}

pub fn evaluate(
    target: &str,
    stats: &AccountStats,
    txs: &[PayloadTx],
    known: &[KnownLabel],
    th: &RuleThresholds,
    decimals: &TokenDecimals,
) -> RuleFindings {
    let mut f = RuleFindings::default();

    if !known.is_empty() {
        let list: Vec<String> = known.iter().map(|k| format!("{} ({})", k.address, k.label)).collect();
        f.c = Some(format!("Counterparty on the high-risk list: {}", list.join(", ")));
    }

    if stats.distinct_counterparties_in >= th.fan_in_senders {
        let inbound: Vec<i64> = txs
            .iter()
            .filter(|t| !t.is_error && t.to == target && t.from != target)
            .filter_map(|t| parse_ts(&t.time_stamp))
            .collect();
        let outbound: Vec<(i64, &str, &str)> = txs
            .iter()
            .filter(|t| !t.is_error && t.from == target && t.to != target)
            .filter_map(|t| parse_ts(&t.time_stamp).map(|ts| (ts, t.to.as_str(), t.hash.as_str())))
            .collect();
        let window = th.dispersal_window_s as i64;
        for t_in in inbound {
            let receivers: BTreeSet<&str> = outbound
                .iter()
                .filter(|(ts, _, _)| *ts >= t_in && *ts <= t_in + window)
                .map(|(_, to, _)| *to)
                .collect();
            if receivers.len() >= th.dispersal_receivers {
                f.b = Some(format!(
                    "Aggregation then dispersion: funds from {} distinct senders, then sent to {} receivers within {} s",
                    stats.distinct_counterparties_in,
                    receivers.len(),
                    th.dispersal_window_s
                ));
                break;
            }
        }
    }

    let round = BigUint::parse_bytes(th.round_unit.as_bytes(), 10).unwrap_or_default();
    let large = BigUint::parse_bytes(th.large_value.as_bytes(), 10).unwrap_or_default();
    let mut a_notes = Vec::new();
    if stats.max_burst_1h >= th.burst_per_hour {
        a_notes.push(format!("{} transactions inside one hour", stats.max_burst_1h));
    }
    if !round.is_zero() {
        if let Some(t) = txs.iter().find(|t| {
            let v = raw_value(t, decimals);
            !v.is_zero() && (&v % &round).is_zero()
        }) {
            a_notes.push(format!("round-number transfer of {} in {}", t.value, t.hash));
        }
    }
    if !large.is_zero() {
        if let Some(t) = txs.iter().find(|t| raw_value(t, decimals) >= large) {
            a_notes.push(format!("large-value transfer of {} in {}", t.value, t.hash));
        }
    }
    if !a_notes.is_empty() {
        f.a = Some(a_notes.join("; "));
    }

    let hours: Vec<u32> = txs
        .iter()
        .filter_map(|t| DateTime::parse_from_rfc3339(&t.time_stamp).ok())
        .map(|d| d.hour())
        .collect();
    if !hours.is_empty() {
        let night = hours
            .iter()
            .filter(|h| **h >= th.night_start_hour && **h < th.night_end_hour)
            .count();
        if night as f64 >= th.night_share * hours.len() as f64 {
            f.d = Some(format!(
                "{night} of {} transactions between {:02}:00 and {:02}:00 UTC",
                hours.len(),
                th.night_start_hour,
                th.night_end_hour
            ));
        }
    }
    f
}

/// Verdict JSON in the output shape the prompt requests, plus justification and gaps.
pub fn rule_backend_assess(
    target: &str,
    stats: &AccountStats,
    txs: &[PayloadTx],
    known: &[KnownLabel],
    th: &RuleThresholds,
    decimals: &TokenDecimals,
) -> String {
    verdict_for(target, stats, txs, known, th, decimals).to_json()
}

fn verdict_for(
    target: &str,
    stats: &AccountStats,
    txs: &[PayloadTx],
    known: &[KnownLabel],
    th: &RuleThresholds,
    decimals: &TokenDecimals,
) -> Verdict {
    if stats.in_count + stats.out_count == 0 && txs.is_empty() {
        return idle_verdict();
    }
    let f = evaluate(target, stats, txs, known, th, decimals);
    let dim = |hit: &Option<String>, name: &str, clear: &str| match hit {
        Some(e) => RiskDimension::new(format!("Suspicious {name}"), e.clone()),
        None => RiskDimension::new(clear, ""),
    };
    let fired: Vec<&str> = ["a", "b", "c", "d"]
        .iter()
        .zip(f.fired())
        .filter(|(_, on)| *on)
        .map(|(n, _)| *n)
        .collect();
    Verdict {
        suspicion_level: level_for(f.fired()),
        a_transaction_patterns: dim(&f.a, "transaction pattern", "No anomalous transaction pattern"),
        b_fund_flows: dim(&f.b, "fund flow", "No aggregation or dispersion pattern"),
        c_associated_addresses: dim(&f.c, "counterparty", "No link to known high-risk entities"),
        d_temporal_behavioral_signs: dim(&f.d, "timing", "No unusual timing"),
        justification: if fired.is_empty() {
            "No rule in the table fired.".into()
        } else {
            format!("Rules fired for dimension(s) {}.", fired.join(", "))
        },
        gaps: "Counterparty identities beyond the supplied blacklist are not verified.".into(),
    }
}

/// Verdict for an account with no transactions at all.
pub fn idle_verdict() -> Verdict {
    let idle = || RiskDimension::new("no activity", "");
    Verdict {
        suspicion_level: SuspicionLevel::NoSuspicion,
        a_transaction_patterns: idle(),
        b_fund_flows: idle(),
        c_associated_addresses: idle(),
        d_temporal_behavioral_signs: idle(),
        justification: "The account has no recorded transactions.".into(),
        gaps: "Activity outside the fetched history is not covered.".into(),
    }
}

/// Locates the payload and the known-labels list inside a rendered prompt.
pub fn payload_from_prompt(prompt: &str) -> Option<(ReasonerPayload, Vec<KnownLabel>)> {
    let key = prompt.find("\"payload_version\"")?;
    let open = prompt[..key].rfind('{')?;
    let (value, _) = first_object_from(prompt, open)?;
    let payload: ReasonerPayload = serde_json::from_value(value).ok()?;
    let known = prompt
        .find(KNOWN_LABELS_MARKER)
        .and_then(|at| {
            let rest = &prompt[at + KNOWN_LABELS_MARKER.len()..];
            let start = rest.find('[')?;
            serde_json::Deserializer::from_str(&rest[start..])
                .into_iter::<Vec<KnownLabel>>()
                .next()?
                .ok()
        })
        .unwrap_or_default();
    Some((payload, known))
}

/// Reviews a verdict: the level must match what its dimension results support.
pub fn review(verdict: &Verdict) -> String {
    let fired = verdict.dimensions().map(|d| indicates_risk(&d.result));
    let expected = level_for(fired);
    if expected == verdict.suspicion_level {
        format!(
            "No flaw. The level {} matches the {} dimension(s) that report risk.",
            verdict.suspicion_level,
            verdict.risk_count()
        )
    } else {
        format!(
            "Critical Issues Identified:\n- The level {} does not match the {} dimension(s) that report risk; the rule table gives {}.",
            verdict.suspicion_level,
            verdict.risk_count(),
            expected
        )
    }
}

/// [`BackendPort`] answering CoT, reflection and extraction prompts from rules.
#[derive(Debug, Clone)]
pub struct RuleBackend {
    prompts: PromptRegistry,
    pub thresholds: RuleThresholds,
    pub decimals: TokenDecimals,
}

impl Default for RuleBackend {
    fn default() -> Self {
        Self::new(PromptRegistry::builtin(), RuleThresholds::default(), TokenDecimals::default())
    }
}

impl RuleBackend {
    pub fn new(prompts: PromptRegistry, thresholds: RuleThresholds, decimals: TokenDecimals) -> Self {
        Self {
            prompts,
            thresholds,
            decimals,
        }
    }

    fn is(&self, prompt: &str, id: PromptId) -> bool {
        let prefix = placeholder_prefix(self.prompts.text(id));
        !prefix.is_empty() && prompt.starts_with(prefix)
    }
}

impl BackendPort for RuleBackend {
    fn complete(&self, prompt: &str, _temperature: f64, _max_tokens: u32) -> Result<String, BackendError> {
        let unsupported = || BackendError::Unsupported {
            backend: "rules".into(),
        };
        if self.is(prompt, PromptId::ExtractChunk) {
            return answer_extract_prompt(prompt).ok_or_else(unsupported);
        }
        if self.is(prompt, PromptId::Reflection) {
            let mut from = 0;
            while let Some((value, at)) = first_object_from(prompt, from) {
                if value.get("suspicion_level").is_some() {
                    let text = serde_json::to_string(&value).expect("serialisable");
                    return parse_verdict(&text).map(|p| review(&p.verdict)).map_err(|_| unsupported());
                }
                from = at + 1;
            }
            return Err(unsupported());
        }
        if self.is(prompt, PromptId::CotPart1) {
            let (payload, known) = payload_from_prompt(prompt).ok_or_else(unsupported)?;
            return Ok(rule_backend_assess(
                &payload.target_address,
                &payload.statistics,
                &payload.transactions,
                &known,
                &self.thresholds,
                &self.decimals,
            ));
        }
        Err(unsupported())
    }

    fn tag(&self) -> &str {
        "rules"
    }
}
