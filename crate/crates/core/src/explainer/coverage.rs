use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{group_digits, ExplainError};
use crate::extractor::{CaseClues, ClueField};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityKind {
    Text,
    Address,
    /// A whole number, matched with or without thousands separators.
    Number,
    /// `amount symbol`; one entity per token symbol.
    TokenAmount,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entity {
    pub field: ClueField,
    pub kind: EntityKind,
    /// `None` when the clue itself is missing; such an entity can never be found.
    pub expected: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub symbol: Option<String>,
}

/// The entities a report is expected to mention (`E_All`).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportChecklist {
    pub entities: Vec<Entity>,
}

impl ReportChecklist {
    /// Every mandatory field yields at least one entity, list fields one per
    /// element. Evidence snippets are supporting material, not entities.
    pub fn from_clues(c: &CaseClues) -> Self {
        let mut entities = Vec::new();
        let mut text = |field, v: Option<String>| {
            entities.push(Entity {
                field,
                kind: EntityKind::Text,
                expected: v.filter(|s| !s.trim().is_empty()),
                symbol: None,
            })
        };
        text(ClueField::Chain, c.chain.as_ref().map(|x| x.to_string()));
        text(ClueField::AttackVector, Some(c.attack_vector.clone()));
        text(ClueField::AffectedPlatform, Some(c.affected_platform.clone()));
        for (field, list) in [
            (ClueField::ContractAddress, &c.contract_address),
            (ClueField::AttackerAddresses, &c.attacker_addresses),
            (ClueField::VictimAddresses, &c.victim_addresses),
        ] {
            if list.is_empty() {
                entities.push(Entity {
                    field,
                    kind: EntityKind::Address,
                    expected: None,
                    symbol: None,
                });
            }
            for a in list {
                entities.push(Entity {
                    field,
                    kind: EntityKind::Address,
                    expected: Some(a.hex().to_owned()),
                    symbol: None,
                });
            }
        }
        entities.push(Entity {
            field: ClueField::StolenUsd,
            kind: EntityKind::Number,
            expected: c.stolen_usd.map(|u| u.to_string()),
            symbol: None,
        });
        if c.stolen_token.is_empty() {
            entities.push(Entity {
                field: ClueField::StolenToken,
                kind: EntityKind::TokenAmount,
                expected: None,
                symbol: None,
            });
        }
        for (sym, amount) in &c.stolen_token {
            entities.push(Entity {
                field: ClueField::StolenToken,
                kind: EntityKind::TokenAmount,
                expected: Some(amount.clone()),
                symbol: Some(sym.clone()),
            });
        }
        for m in c.laundering_methods.iter().flatten() {
            entities.push(Entity {
                field: ClueField::LaunderingMethods,
                kind: EntityKind::Text,
                expected: Some(m.clone()),
                symbol: None,
            });
        }
        if let Some(p) = &c.laundering_path {
            entities.push(Entity {
                field: ClueField::LaunderingPath,
                kind: EntityKind::Text,
                expected: Some(p.clone()),
                symbol: None,
            });
        }
        Self { entities }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mention {
    Full,
    Partial,
    Missing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityStatus {
    #[serde(flatten)]
    pub entity: Entity,
    pub status: Mention,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub snippet: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub e_all: usize,
    pub e_full: usize,
    pub e_part: usize,
    pub r_coverage: f64,
    /// How stolen-token entries were counted.
    pub token_entities: String,
    pub entities: Vec<EntityStatus>,
}

/// `(full + 0.5 * partial) / all`.
pub fn coverage_rate(full: usize, partial: usize, all: usize) -> Result<f64, ExplainError> {
    if all == 0 {
        return Err(ExplainError::EmptyChecklist);
    }
    Ok((full as f64 + 0.5 * partial as f64) / all as f64)
}

fn fold(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

fn snippet(report: &str, byte_at: usize, len: usize) -> String {
    let start = report[..byte_at].char_indices().rev().nth(40).map_or(0, |(i, _)| i);
    let end = report[byte_at + len..]
        .char_indices()
        .nth(40)
        .map_or(report.len(), |(i, _)| byte_at + len + i);
    report[start..end].split_whitespace().collect::<Vec<_>>().join(" ")
}

/// First position of `needle` in `hay` (both folded) that is not glued to a
/// longer run of word characters on either side.
fn find_token(hay: &str, needle: &str) -> Option<usize> {
    if needle.is_empty() {
        return None;
    }
    let word = |c: Option<char>| c.is_some_and(|c| c.is_ascii_alphanumeric());
    let mut from = 0;
    while let Some(i) = hay[from..].find(needle) {
        let at = from + i;
        let before = hay[..at].chars().next_back();
        let after = hay[at + needle.len()..].chars().next();
        let edge_ok = !(word(before) && needle.starts_with(|c: char| c.is_ascii_alphanumeric()))
            && !(word(after) && needle.ends_with(|c: char| c.is_ascii_alphanumeric()));
        if edge_ok {
            return Some(at);
        }
        from = at + needle.len().max(1);
    }
    None
}

/// `1500000000` also reads as `1.5 billion`; such forms only count as partial.
fn approximate_forms(n: u128) -> Vec<String> {
    let mut out = Vec::new();
    for (unit, name) in [(1_000_000_000u128, "billion"), (1_000_000, "million")] {
        if n >= unit {
            let x = n as f64 / unit as f64;
            for digits in [0usize, 1, 2] {
                let s = format!("{x:.digits$}");
                let back: f64 = s.parse().unwrap_or(0.0);
                if (back - x).abs() > 0.05 * x {
                    continue;
                }
                let s = if s.contains('.') { s.trim_end_matches('0').trim_end_matches('.').to_owned() } else { s };
                out.push(format!("{s} {name}"));
            }
            break;
        }
    }
    out.dedup();
    out
}

fn number_forms(raw: &str) -> Vec<String> {
    let digits: String = raw.chars().filter(|c| *c != ',' && *c != '_').collect();
    let mut forms = vec![digits.clone()];
    if let Some((int, frac)) = digits.split_once('.') {
        if let Ok(n) = int.parse::<u128>() {
            forms.push(format!("{}.{frac}", group_digits(n)));
        }
    } else if let Ok(n) = digits.parse::<u128>() {
        forms.push(group_digits(n));
    }
    forms.dedup();
    forms
}

const STOP: [&str; 12] = ["with", "from", "into", "that", "this", "then", "than", "were", "their", "through", "over", "based"];

fn significant_words(s: &str) -> BTreeSet<String> {
    s.split(|c: char| !c.is_alphanumeric())
        .map(str::to_lowercase)
        .filter(|w| w.len() >= 4 && !STOP.contains(&w.as_str()))
        .collect()
}

fn locate(entity: &Entity, folded: &str, words: &BTreeSet<String>) -> (Mention, Option<String>) {
    let Some(expected) = &entity.expected else {
        return (Mention::Missing, None);
    };
    let hit = |needle: &str| find_token(folded, &fold(needle)).map(|at| (at, fold(needle).len()));
    // Snippets come from the folded text so match offsets stay aligned.
    let cite = |(at, len): (usize, usize)| Some(snippet(folded, at, len));
    match entity.kind {
        EntityKind::Address => {
            if let Some(h) = hit(expected) {
                return (Mention::Full, cite(h));
            }
            if let Some(h) = hit(&expected[..6.min(expected.len())]) {
                return (Mention::Partial, cite(h));
            }
        }
        EntityKind::Number => {
            for f in number_forms(expected) {
                if let Some(h) = hit(&f) {
                    return (Mention::Full, cite(h));
                }
            }
            if let Ok(n) = expected.parse::<u128>() {
                for f in approximate_forms(n) {
                    if let Some(h) = hit(&f) {
                        return (Mention::Partial, cite(h));
                    }
                }
            }
        }
        EntityKind::TokenAmount => {
            let sym = entity.symbol.as_deref().unwrap_or("");
            for f in number_forms(expected) {
                if let Some(h) = hit(&format!("{f} {sym}")) {
                    return (Mention::Full, cite(h));
                }
            }
            for f in number_forms(expected) {
                if let Some(h) = hit(&f) {
                    return (Mention::Partial, cite(h));
                }
            }
        }
        EntityKind::Text => {
            if let Some(h) = hit(expected) {
                return (Mention::Full, cite(h));
            }
            let want = significant_words(expected);
            let present = want.iter().filter(|w| words.contains(*w)).count();
            if !want.is_empty() && present * 2 >= want.len() {
                return (Mention::Partial, None);
            }
        }
    }
    (Mention::Missing, None)
}

/// Scores which checklist entities `report` mentions fully, partially or not at all.
pub fn coverage(report: &str, checklist: &ReportChecklist) -> Result<CoverageReport, ExplainError> {
    if checklist.entities.is_empty() {
        return Err(ExplainError::EmptyChecklist);
    }
    let folded = fold(report);
    let words = significant_words(report);
    let entities: Vec<EntityStatus> = checklist
        .entities
        .iter()
        .map(|e| {
            let (status, snippet) = locate(e, &folded, &words);
            EntityStatus {
                entity: e.clone(),
                status,
                snippet,
            }
        })
        .collect();
    let e_full = entities.iter().filter(|e| e.status == Mention::Full).count();
    let e_part = entities.iter().filter(|e| e.status == Mention::Partial).count();
    let e_all = entities.len();
    Ok(CoverageReport {
        e_all,
        e_full,
        e_part,
        r_coverage: coverage_rate(e_full, e_part, e_all)?,
        token_entities: "one entity per token symbol".into(),
        entities,
    })
}
