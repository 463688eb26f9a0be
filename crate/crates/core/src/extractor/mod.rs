//! Incident document → [`CaseClues`]: chunk, summarise each chunk, consolidate.

pub mod patterns;

use std::collections::BTreeMap;
use std::sync::OnceLock;

use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::backend::{BackendError, BackendPort};
use crate::jsontext::extract_object;
use crate::model::{normalize_address, Address, ChainId};
use crate::prompts::{PromptError, PromptId, PromptRegistry};

pub use patterns::PatternBackend;

pub const DEFAULT_MAX_CHUNK_CHARS: usize = 4000;
pub const MIN_CHUNK_CHARS: usize = 200;

#[derive(Debug, Error)]
pub enum ExtractError {
    #[error("document is empty")]
    EmptyDocument,
    #[error("chunk limit {0} is below the minimum of {MIN_CHUNK_CHARS} characters")]
    ChunkLimitTooSmall(usize),
    #[error("backend failed on chunk {chunk_id}: {source}")]
    Backend {
        chunk_id: u32,
        #[source]
        source: BackendError,
    },
    #[error("chunk {chunk_id}: backend output is not a clue object")]
    UnparseableSummary { chunk_id: u32 },
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentChunk {
    pub chunk_id: u32,
    /// First and last paragraph (1-based, inclusive) contributing to the chunk.
    pub paragraph_range: (usize, usize),
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClueField {
    Chain,
    AttackVector,
    AffectedPlatform,
    ContractAddress,
    AttackerAddresses,
    VictimAddresses,
    StolenUsd,
    StolenToken,
    LaunderingMethods,
    LaunderingPath,
    EvidenceSnippets,
}

impl ClueField {
    pub const ALL: [ClueField; 11] = [
        ClueField::Chain,
        ClueField::AttackVector,
        ClueField::AffectedPlatform,
        ClueField::ContractAddress,
        ClueField::AttackerAddresses,
        ClueField::VictimAddresses,
        ClueField::StolenUsd,
        ClueField::StolenToken,
        ClueField::LaunderingMethods,
        ClueField::LaunderingPath,
        ClueField::EvidenceSnippets,
    ];

    pub fn is_mandatory(self) -> bool {
        !matches!(
            self,
            ClueField::LaunderingMethods | ClueField::LaunderingPath | ClueField::EvidenceSnippets
        )
    }

    pub fn parse(name: &str) -> Option<Self> {
        serde_json::from_value(Value::String(name.to_owned())).ok()
    }

    /// Canonical form of a candidate value, or `None` if it is not valid for this field.
    pub fn normalize(self, raw: &str) -> Option<String> {
        let raw = raw.trim();
        if raw.is_empty() {
            return None;
        }
        match self {
            ClueField::Chain => {
                let id = raw.to_ascii_lowercase();
                ChainId::new(&id).ok().map(|_| id)
            }
            ClueField::ContractAddress | ClueField::AttackerAddresses | ClueField::VictimAddresses => {
                normalize_address(raw, &ChainId::ethereum()).ok().map(|a| a.hex().to_owned())
            }
            ClueField::StolenUsd => {
                let digits: String = raw.chars().filter(|c| !matches!(c, ',' | '$' | ' ')).collect();
                digits.parse::<u64>().ok().map(|v| v.to_string())
            }
            ClueField::StolenToken => {
                let (sym, amount) = raw.split_once(':')?;
                let amount: String = amount.trim().chars().filter(|c| *c != ',').collect();
                let valid = !sym.trim().is_empty()
                    && amount.split_once('.').map_or(amount.chars().all(|c| c.is_ascii_digit()), |(i, f)| {
                        i.chars().chain(f.chars()).all(|c| c.is_ascii_digit())
                    });
                (valid && !amount.is_empty()).then(|| format!("{}:{}", sym.trim(), amount))
            }
            _ => Some(raw.to_owned()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Candidate {
    pub value: String,
    pub snippet: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkSummary {
    pub chunk_id: u32,
    pub candidate_clues: BTreeMap<ClueField, Vec<Candidate>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseClues {
    pub chain: Option<ChainId>,
    pub attack_vector: String,
    pub affected_platform: String,
    pub contract_address: Vec<Address>,
    pub attacker_addresses: Vec<Address>,
    pub victim_addresses: Vec<Address>,
    pub stolen_usd: Option<u64>,
    /// Token symbol → decimal amount in whole units.
    pub stolen_token: BTreeMap<String, String>,
    pub laundering_methods: Option<Vec<String>>,
    pub laundering_path: Option<String>,
    pub evidence_snippets: Option<Vec<String>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldStatus {
    /// Every chunk that mentioned the field agreed.
    Complete,
    /// Chunks disagreed; the most frequent value won.
    Resolved,
    /// Mandatory field with no candidate.
    Missing,
    /// Optional field with no candidate.
    Absent,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub chunk_id: u32,
    pub value: String,
    pub snippet: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Extraction {
    pub clues: CaseClues,
    pub status: BTreeMap<ClueField, FieldStatus>,
    pub audit: BTreeMap<ClueField, Vec<Provenance>>,
}

impl Extraction {
    pub fn is_complete(&self) -> bool {
        !self.status.values().any(|s| *s == FieldStatus::Missing)
    }

    pub fn missing(&self) -> Vec<ClueField> {
        self.status
            .iter()
            .filter(|(_, s)| **s == FieldStatus::Missing)
            .map(|(f, _)| *f)
            .collect()
    }
}

fn paragraph_break() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\n[ \t]*\n\s*").expect("valid regex"))
}

fn sentence_end() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"[.!?]\s+").expect("valid regex"))
}

/// A contiguous byte range of the source plus the paragraph it belongs to.
struct Piece {
    start: usize,
    end: usize,
    paragraph: usize,
}

fn content_chars(s: &str) -> usize {
    s.trim().chars().count()
}

/// Splits `s[start..end]` into pieces no longer than `max` characters,
/// preferring sentence ends, then whitespace, then any char boundary.
fn split_long(text: &str, start: usize, end: usize, max: usize, paragraph: usize, out: &mut Vec<Piece>) {
    let mut cuts: Vec<usize> = sentence_end()
        .find_iter(&text[start..end])
        .map(|m| start + m.end())
        .filter(|&c| c < end)
        .collect();
    cuts.push(end);
    let mut from = start;
    let mut last_ok = None;
    let mut i = 0;
    while from < end {
        let cut = cuts.get(i).copied().unwrap_or(end);
        if content_chars(&text[from..cut]) <= max {
            last_ok = Some(cut);
            i += 1;
            if cut == end {
                out.push(Piece { start: from, end, paragraph });
                break;
            }
            continue;
        }
        match last_ok.take() {
            Some(c) if c > from => {
                out.push(Piece { start: from, end: c, paragraph });
                from = c;
            }
            _ => {
                // One sentence longer than the limit: cut at whitespace.
                let mut taken = 0;
                let mut hard = from;
                let mut ws = None;
                for (off, ch) in text[from..cut].char_indices() {
                    if taken == max {
                        break;
                    }
                    taken += 1;
                    hard = from + off + ch.len_utf8();
                    if ch.is_whitespace() {
                        ws = Some(hard);
                    }
                }
                let c = ws.filter(|&w| w > from).unwrap_or(hard);
                out.push(Piece { start: from, end: c, paragraph });
                from = c;
                while i < cuts.len() && cuts[i] <= from {
                    i += 1;
                }
            }
        }
    }
}

/// Lossless split: the chunk texts, concatenated in id order, reproduce `text`.
pub fn split_document(text: &str, max_chunk_chars: usize) -> Result<Vec<DocumentChunk>, ExtractError> {
    if max_chunk_chars < MIN_CHUNK_CHARS {
        return Err(ExtractError::ChunkLimitTooSmall(max_chunk_chars));
    }
    if text.trim().is_empty() {
        return Err(ExtractError::EmptyDocument);
    }
    let mut bounds = vec![0];
    bounds.extend(paragraph_break().find_iter(text).map(|m| m.end()).filter(|&e| e < text.len()));
    bounds.push(text.len());
    let mut pieces = Vec::new();
    for (n, w) in bounds.windows(2).enumerate() {
        let (s, e) = (w[0], w[1]);
        if content_chars(&text[s..e]) > max_chunk_chars {
            split_long(text, s, e, max_chunk_chars, n + 1, &mut pieces);
        } else {
            pieces.push(Piece {
                start: s,
                end: e,
                paragraph: n + 1,
            });
        }
    }
    let mut chunks: Vec<DocumentChunk> = Vec::new();
    let mut cur: Option<(usize, usize, usize, usize)> = None;
    let flush = |c: (usize, usize, usize, usize), chunks: &mut Vec<DocumentChunk>| {
        chunks.push(DocumentChunk {
            chunk_id: chunks.len() as u32 + 1,
            paragraph_range: (c.2, c.3),
            text: text[c.0..c.1].to_owned(),
        });
    };
    for p in pieces {
        cur = match cur {
            Some(c) if content_chars(&text[c.0..p.end]) <= max_chunk_chars => Some((c.0, p.end, c.2, p.paragraph)),
            Some(c) => {
                flush(c, &mut chunks);
                Some((p.start, p.end, p.paragraph, p.paragraph))
            }
            None => Some((p.start, p.end, p.paragraph, p.paragraph)),
        };
    }
    if let Some(c) = cur {
        flush(c, &mut chunks);
    }
    Ok(chunks)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtractOptions {
    pub max_chunk_chars: usize,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        Self {
            max_chunk_chars: DEFAULT_MAX_CHUNK_CHARS,
            temperature: 0.3,
            max_tokens: 2048,
        }
    }
}

/// Reads the `{field: [{value, snippet}]}` object a backend returned,
/// keeping only known fields, valid values and snippets found in the chunk.
pub fn parse_summary(chunk: &DocumentChunk, raw: &str) -> Result<ChunkSummary, ExtractError> {
    let (obj, _) = extract_object(raw).ok_or(ExtractError::UnparseableSummary {
        chunk_id: chunk.chunk_id,
    })?;
    let mut clues: BTreeMap<ClueField, Vec<Candidate>> = BTreeMap::new();
    for (key, entries) in obj.as_object().expect("object") {
        let Some(field) = ClueField::parse(key) else {
            tracing::debug!(chunk = chunk.chunk_id, key, "dropping unknown clue field");
            continue;
        };
        for entry in entries.as_array().into_iter().flatten() {
            let value = match &entry["value"] {
                Value::String(s) => s.clone(),
                Value::Number(n) => n.to_string(),
                _ => continue,
            };
            let snippet = entry["snippet"].as_str().unwrap_or_default().trim();
            let Some(value) = field.normalize(&value) else { continue };
            if snippet.is_empty() || !chunk.text.contains(snippet) {
                tracing::debug!(chunk = chunk.chunk_id, ?field, "dropping candidate with unsupported snippet");
                continue;
            }
            let list = clues.entry(field).or_default();
            if !list.iter().any(|c| c.value == value) {
                list.push(Candidate {
                    value,
                    snippet: snippet.to_owned(),
                });
            }
        }
    }
    Ok(ChunkSummary {
        chunk_id: chunk.chunk_id,
        candidate_clues: clues,
    })
}

pub fn summarize_chunk(
    chunk: &DocumentChunk,
    backend: &dyn BackendPort,
    prompts: &PromptRegistry,
    opts: &ExtractOptions,
) -> Result<ChunkSummary, ExtractError> {
    let id = chunk.chunk_id.to_string();
    let prompt = prompts.render(PromptId::ExtractChunk, &[("chunk_id", &id), ("chunk_text", &chunk.text)])?;
    let raw = backend
        .complete(&prompt, opts.temperature, opts.max_tokens)
        .map_err(|source| ExtractError::Backend {
            chunk_id: chunk.chunk_id,
            source,
        })?;
    parse_summary(chunk, &raw)
}

/// Votes for one scalar: value → (chunks that named it, first chunk, provenance).
#[derive(Default)]
struct Tally {
    votes: BTreeMap<String, (usize, u32, Vec<Provenance>)>,
}

impl Tally {
    fn add(&mut self, chunk_id: u32, c: &Candidate) {
        let e = self.votes.entry(c.value.clone()).or_insert((0, chunk_id, Vec::new()));
        if e.2.last().map(|p| p.chunk_id) != Some(chunk_id) {
            e.0 += 1;
        }
        e.2.push(Provenance {
            chunk_id,
            value: c.value.clone(),
            snippet: c.snippet.clone(),
        });
    }

    /// Most chunks wins; ties go to the value seen in the earliest chunk.
    fn winner(self) -> Option<(String, Vec<Provenance>, bool)> {
        let contested = self.votes.len() > 1;
        self.votes
            .into_iter()
            .min_by(|a, b| b.1 .0.cmp(&a.1 .0).then(a.1 .1.cmp(&b.1 .1)))
            .map(|(v, (_, _, prov))| (v, prov, contested))
    }
}

/// Deterministic fold over the summaries in chunk order.
pub fn consolidate(summaries: &[ChunkSummary]) -> Extraction {
    let mut ordered: Vec<&ChunkSummary> = summaries.iter().collect();
    ordered.sort_by_key(|s| s.chunk_id);

    let mut status = BTreeMap::new();
    let mut audit: BTreeMap<ClueField, Vec<Provenance>> = BTreeMap::new();

    let mut scalar = |field: ClueField| -> Option<String> {
        let mut t = Tally::default();
        for s in &ordered {
            for c in s.candidate_clues.get(&field).into_iter().flatten() {
                t.add(s.chunk_id, c);
            }
        }
        let won = t.winner();
        status.insert(
            field,
            match &won {
                Some((_, _, true)) => FieldStatus::Resolved,
                Some(_) => FieldStatus::Complete,
                None if field.is_mandatory() => FieldStatus::Missing,
                None => FieldStatus::Absent,
            },
        );
        won.map(|(v, prov, _)| {
            audit.insert(field, prov);
            v
        })
    };

    let chain = scalar(ClueField::Chain).and_then(|c| ChainId::new(&c).ok());
    let attack_vector = scalar(ClueField::AttackVector).unwrap_or_default();
    let affected_platform = scalar(ClueField::AffectedPlatform).unwrap_or_default();
    let stolen_usd = scalar(ClueField::StolenUsd).and_then(|v| v.parse().ok());
    let laundering_path = scalar(ClueField::LaunderingPath);

    // Each address gets one role: the one most chunks gave it, earliest on ties.
    const ROLES: [ClueField; 3] = [
        ClueField::ContractAddress,
        ClueField::AttackerAddresses,
        ClueField::VictimAddresses,
    ];
    let mut roles: BTreeMap<String, (usize, BTreeMap<ClueField, Tally>)> = BTreeMap::new();
    let mut order = 0;
    for s in &ordered {
        for field in ROLES {
            for c in s.candidate_clues.get(&field).into_iter().flatten() {
                let e = roles.entry(c.value.clone()).or_insert_with(|| {
                    order += 1;
                    (order, BTreeMap::new())
                });
                e.1.entry(field).or_default().add(s.chunk_id, c);
            }
        }
    }
    let mut by_role: BTreeMap<ClueField, Vec<(usize, String)>> = BTreeMap::new();
    for (hex, (first, tallies)) in roles {
        let mut best: Option<(ClueField, usize, u32, Vec<Provenance>)> = None;
        for (field, t) in tallies {
            let (count, first_chunk, prov) = t.votes.into_values().next().expect("one value per tally");
            let better = match &best {
                None => true,
                Some((_, c, fc, _)) => count > *c || (count == *c && first_chunk < *fc),
            };
            if better {
                best = Some((field, count, first_chunk, prov));
            }
        }
        let (field, _, _, prov) = best.expect("address has a role");
        audit.entry(field).or_default().extend(prov);
        by_role.entry(field).or_default().push((first, hex));
    }
    let chain_for_addresses = chain.clone().unwrap_or_else(ChainId::ethereum);
    let mut addresses = |field: ClueField| -> Vec<Address> {
        let mut list = by_role.remove(&field).unwrap_or_default();
        list.sort();
        status.insert(
            field,
            if list.is_empty() {
                FieldStatus::Missing
            } else {
                FieldStatus::Complete
            },
        );
        list.into_iter()
            .filter_map(|(_, hex)| normalize_address(&hex, &chain_for_addresses).ok())
            .collect()
    };
    let contract_address = addresses(ClueField::ContractAddress);
    let attacker_addresses = addresses(ClueField::AttackerAddresses);
    let victim_addresses = addresses(ClueField::VictimAddresses);

    let mut token_tallies: BTreeMap<String, Tally> = BTreeMap::new();
    for s in &ordered {
        for c in s.candidate_clues.get(&ClueField::StolenToken).into_iter().flatten() {
            if let Some((sym, _)) = c.value.split_once(':') {
                token_tallies.entry(sym.to_owned()).or_default().add(s.chunk_id, c);
            }
        }
    }
    let mut stolen_token = BTreeMap::new();
    let mut token_contested = false;
    for (sym, t) in token_tallies {
        if let Some((v, prov, contested)) = t.winner() {
            token_contested |= contested;
            audit.entry(ClueField::StolenToken).or_default().extend(prov);
            stolen_token.insert(sym, v.split_once(':').map(|(_, a)| a.to_owned()).unwrap_or_default());
        }
    }
    status.insert(
        ClueField::StolenToken,
        match (stolen_token.is_empty(), token_contested) {
            (true, _) => FieldStatus::Missing,
            (false, true) => FieldStatus::Resolved,
            (false, false) => FieldStatus::Complete,
        },
    );

    let mut union = |field: ClueField| -> Option<Vec<String>> {
        let mut values: Vec<String> = Vec::new();
        for s in &ordered {
            for c in s.candidate_clues.get(&field).into_iter().flatten() {
                if !values.contains(&c.value) {
                    values.push(c.value.clone());
                }
                audit.entry(field).or_default().push(Provenance {
                    chunk_id: s.chunk_id,
                    value: c.value.clone(),
                    snippet: c.snippet.clone(),
                });
            }
        }
        status.insert(
            field,
            if values.is_empty() {
                FieldStatus::Absent
            } else {
                FieldStatus::Complete
            },
        );
        (!values.is_empty()).then_some(values)
    };
    let laundering_methods = union(ClueField::LaunderingMethods);
    let evidence_snippets = union(ClueField::EvidenceSnippets);

    Extraction {
        clues: CaseClues {
            chain,
            attack_vector,
            affected_platform,
            contract_address,
            attacker_addresses,
            victim_addresses,
            stolen_usd,
            stolen_token,
            laundering_methods,
            laundering_path,
            evidence_snippets,
        },
        status,
        audit,
    }
}

/// Full pipeline over one document. Chunks are summarised in parallel and
/// folded in id order, so the result does not depend on scheduling.
pub fn extract_document(
    text: &str,
    backend: &dyn BackendPort,
    prompts: &PromptRegistry,
    opts: &ExtractOptions,
) -> Result<Extraction, ExtractError> {
    let chunks = split_document(text, opts.max_chunk_chars)?;
    let summaries: Vec<ChunkSummary> = chunks
        .par_iter()
        .map(|c| summarize_chunk(c, backend, prompts, opts))
        .collect::<Result<_, _>>()?;
    Ok(consolidate(&summaries))
}
