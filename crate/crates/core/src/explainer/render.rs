use std::fmt::Write;

use super::{dimensions, group_digits, DatasetSummary, ExplainInput};
use crate::model::{RiskAssessment, SuspicionLevel};
use crate::reasoner::indicates_risk;

pub const SECTION_TITLES: [&str; 8] = [
    "Introduction",
    "Incident Overview",
    "Dataset Statistical Summary",
    "Risk Account Analysis",
    "Typical Laundering Transaction Patterns",
    "Fund Flow Characteristics",
    "Temporal Behavior Patterns",
    "Conclusion and Audit Recommendations",
];

const EXAMPLES: usize = 5;

fn heading(out: &mut String, n: usize) {
    let _ = write!(out, "\n## {}. {}\n\n", n + 1, SECTION_TITLES[n]);
}

fn amount(raw: &str) -> String {
    match raw.split_once('.') {
        Some((int, frac)) => match int.parse::<u128>() {
            Ok(n) => format!("{}.{frac}", group_digits(n)),
            Err(_) => raw.to_owned(),
        },
        None => raw.parse::<u128>().map(group_digits).unwrap_or_else(|_| raw.to_owned()),
    }
}

fn list_addresses(out: &mut String, label: &str, list: &[crate::model::Address]) {
    if list.is_empty() {
        let _ = writeln!(out, "- {label}: not identified in the source material");
        return;
    }
    for a in list {
        let _ = writeln!(out, "- {label}: `{}` ({})", a.hex(), a.chain());
    }
}

/// Accounts whose dimension `i` reports risk, in label order.
fn flagged(l_all: &[RiskAssessment], i: usize) -> Vec<&RiskAssessment> {
    l_all.iter().filter(|r| indicates_risk(&dimensions(r)[i].result)).collect()
}

fn cite(out: &mut String, rows: &[&RiskAssessment], i: usize) {
    for r in rows.iter().take(EXAMPLES) {
        let d = dimensions(r)[i];
        let evidence = if d.evidence.is_empty() { &d.result } else { &d.evidence };
        let _ = writeln!(
            out,
            "- `{}` (layer {}, {}): {}",
            r.target_address.hex(),
            r.hop_depth,
            r.suspicion_level,
            evidence
        );
    }
    if rows.len() > EXAMPLES {
        let _ = writeln!(out, "- and {} more account(s)", rows.len() - EXAMPLES);
    }
}

fn pct(part: usize, whole: usize) -> String {
    if whole == 0 {
        "0.0%".into()
    } else {
        format!("{:.1}%", part as f64 * 100.0 / whole as f64)
    }
}

/// Deterministic report filled from the clues and trace statistics.
pub fn render_template(input: &ExplainInput<'_>) -> String {
    let c = input.clues;
    let s = DatasetSummary::compute(input.l_all, input.normal_controls);
    let platform = if c.affected_platform.is_empty() { "the affected platform" } else { &c.affected_platform };
    let mut out = String::new();
    let _ = writeln!(out, "# Laundering Dataset Report: {platform}");

    heading(&mut out, 0);
    let _ = writeln!(
        out,
        "This document helps auditors read the laundering dataset built for the incident at {platform}. \
         Seed accounts taken from incident reports were traced hop by hop over on-chain transfers; \
         each reached account was rated on four risk dimensions and given a suspicion level."
    );

    heading(&mut out, 1);
    let chain = c.chain.as_ref().map_or("an unidentified chain".to_owned(), |x| x.to_string());
    let _ = writeln!(out, "- Affected platform: {platform}");
    let _ = writeln!(out, "- Chain: {chain}");
    if !c.attack_vector.is_empty() {
        let _ = writeln!(out, "- Attack vector: {}", c.attack_vector);
    }
    match c.stolen_usd {
        Some(usd) => {
            let _ = writeln!(out, "- Stolen value: {} USD", group_digits(u128::from(usd)));
        }
        None => {
            let _ = writeln!(out, "- Stolen value: not stated in the source material");
        }
    }
    for (sym, amt) in &c.stolen_token {
        let _ = writeln!(out, "- Stolen asset: {} {sym}", amount(amt));
    }
    if let Some(methods) = &c.laundering_methods {
        let _ = writeln!(out, "- Laundering methods: {}", methods.join("; "));
    }
    if let Some(path) = &c.laundering_path {
        let _ = writeln!(out, "- Laundering path: {path}");
    }
    out.push('\n');
    list_addresses(&mut out, "Attacker", &c.attacker_addresses);
    list_addresses(&mut out, "Victim", &c.victim_addresses);
    list_addresses(&mut out, "Contract", &c.contract_address);

    heading(&mut out, 2);
    let _ = writeln!(out, "- Accounts analyzed: {}", s.analyzed);
    let _ = writeln!(out, "- Suspected laundering accounts (Low or above): {}", s.suspected);
    if let Some(n) = s.normal_controls {
        let _ = writeln!(out, "- Normal control accounts: {n}");
    }
    let _ = writeln!(out, "\n| Level | Accounts | Share of analyzed | Share of suspected |");
    let _ = writeln!(out, "|---|---:|---:|---:|");
    for row in &s.levels {
        let sus = row.pct_of_suspected.map_or("n/a".to_owned(), |p| format!("{p:.1}%"));
        let _ = writeln!(out, "| {} | {} | {:.1}% | {sus} |", row.level, row.count, row.pct_of_analyzed);
    }
    let _ = writeln!(out, "\n| Layer | Accounts | High | Medium | Low | No Suspicion | Share of suspected |");
    let _ = writeln!(out, "|---:|---:|---:|---:|---:|---:|---:|");
    for l in &s.layers {
        let sus = l.high + l.medium + l.low;
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} | {} | {} |",
            l.layer,
            l.accounts,
            l.high,
            l.medium,
            l.low,
            l.no_suspicion,
            pct(sus, s.suspected)
        );
    }

    heading(&mut out, 3);
    if input.r_final.is_empty() {
        let _ = writeln!(out, "No high-risk accounts were identified in this trace.");
    } else {
        let _ = writeln!(out, "{} account(s) were rated High:\n", input.r_final.len());
        for r in input.r_final.iter().take(10) {
            let reasons: Vec<&str> = dimensions(r)
                .iter()
                .filter(|d| indicates_risk(&d.result))
                .map(|d| if d.evidence.is_empty() { d.result.as_str() } else { d.evidence.as_str() })
                .collect();
            let _ = writeln!(out, "- `{}` (layer {}): {}", r.target_address.hex(), r.hop_depth, reasons.join("; "));
        }
        if input.r_final.len() > 10 {
            let _ = writeln!(out, "- and {} more", input.r_final.len() - 10);
        }
    }
    for level in [SuspicionLevel::Medium, SuspicionLevel::Low] {
        let rows: Vec<&RiskAssessment> = input.l_all.iter().filter(|r| r.suspicion_level == level).collect();
        let _ = write!(out, "\n{level} accounts: {}.", rows.len());
        if let Some(r) = rows.first() {
            let why: Vec<&str> = dimensions(r)
                .iter()
                .filter(|d| indicates_risk(&d.result))
                .map(|d| d.result.as_str())
                .collect();
            let _ = write!(out, " For example `{}`: {}.", r.target_address.hex(), why.join("; "));
        }
        out.push('\n');
    }

    let sections = [
        (4, 0, "burst activity, round-number or unusually large transfers"),
        (5, 1, "aggregation from many senders followed by fast dispersion"),
        (6, 3, "activity concentrated in night-time hours"),
    ];
    for (n, dim, what) in sections {
        heading(&mut out, n);
        let rows = flagged(input.l_all, dim);
        let _ = writeln!(
            out,
            "{} of {} analyzed account(s) ({}) show {what}.\n",
            rows.len(),
            s.analyzed,
            pct(rows.len(), s.analyzed)
        );
        cite(&mut out, &rows, dim);
        if n == 5 {
            let linked = flagged(input.l_all, 2).len();
            let _ = writeln!(out, "\n{linked} account(s) transacted directly with known high-risk counterparties.");
            let home = input.l_all[0].target_address.chain();
            let bridged = input.l_all.iter().filter(|r| r.target_address.chain() != home).count();
            if bridged > 0 {
                let _ = writeln!(out, "{bridged} account(s) were reached on another chain through bridge transfers.");
            }
        }
    }

    heading(&mut out, 7);
    let busiest = s
        .layers
        .iter()
        .filter(|l| l.high > 0)
        .max_by(|a, b| a.high.cmp(&b.high).then(b.layer.cmp(&a.layer)));
    let _ = writeln!(
        out,
        "- {} of {} analyzed account(s) are suspected; {} are High.",
        s.suspected,
        s.analyzed,
        input.r_final.len()
    );
    if let Some(l) = busiest {
        let _ = writeln!(out, "- Layer {} holds the most High accounts ({}).", l.layer, l.high);
    }
    let _ = writeln!(
        out,
        "- Review High accounts first, then Medium accounts linked to known high-risk counterparties.\n\
         - Watch for fast aggregation and dispersion, bridge exits and night-time bursts when extending the trace."
    );
    out
}
