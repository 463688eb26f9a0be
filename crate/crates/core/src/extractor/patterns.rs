//! Deterministic clue extraction from plain text.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;

use regex::Regex;

use super::{Candidate, ChunkSummary, ClueField, DocumentChunk};
use crate::backend::{BackendError, BackendPort};

macro_rules! re {
    ($name:ident, $pat:expr) => {
        fn $name() -> &'static Regex {
            static RE: OnceLock<Regex> = OnceLock::new();
            RE.get_or_init(|| Regex::new($pat).expect("valid regex"))
        }
    };
}

re!(hex_run, r"0[xX][0-9a-fA-F]+");
re!(usd_symbol, r"(?i)(?:US)?\$\s?(\d[\d,]*(?:\.\d+)?)(?:\s*(billion|million|thousand|bn|mn|[bmk])\b)?");
re!(
    usd_words,
    r"(?i)\b(\d[\d,]*(?:\.\d+)?)\s*(billion|million|thousand)?\s*(?:US dollars|U\.S\. dollars|USD|dollars)\b"
);
re!(
    token_qty,
    r"(\d[\d,]*(?:\.\d+)?)\s+(ETH|mETH|cmETH|stETH|wstETH|WETH|USDT|USDC|DAI|BTC|WBTC|BNB|RUNE|POL|MATIC|SOL|TRX)\b"
);
re!(
    chain_names,
    r"(?i)\b(ethereum|bnb smart chain|binance smart chain|bnb chain|bsc|polygon|arbitrum|optimism|avalanche|bitcoin|tron|solana)\b"
);
re!(theft, r"(?i)\b(stole\w*|theft|hack\w*|drain\w*|exploit\w*|heist|lost|loss\w*|compromis\w*)");
re!(
    laundering,
    r"(?i)\b(launder\w*|swap\w*|bridg\w*|convert\w*|mix(?:er|ers|ing)\b|thorchain|exch\b|otc\b|dex(?:es)?\b|peel chain|layer(?:ed|ing)\b)"
);
re!(payout, r"(?i)\b(bounty|bounties|reward\w*|fees?)\b");
re!(
    labeled,
    r"(?im)^[ \t]*(?:[-*][ \t]+)?(attack vector|affected platform|laundering path)[ \t]*:[ \t]*(\S.*?)[ \t]*$"
);
re!(
    role_words,
    r"(?i)\b(attacker|exploiter|hacker|victim|cold wallet|contracts?)\b"
);

const METHODS: &[(&str, &str)] = &[
    (r"(?i)\bthorchain\b", "THORChain cross-chain bridge"),
    (r"(?i)\bbridg\w*", "cross-chain bridging"),
    (r"(?i)\b(dex(?:es)?|swap\w*)\b", "DEX swaps"),
    (r"\beXch\b", "eXch exchange"),
    (r"(?i)\btornado cash\b", "Tornado Cash mixer"),
    (r"(?i)\bmix(?:er|ers|ing)\b", "mixers"),
    (r"(?i)\botc\b", "OTC trading"),
    (r"(?i)\b(peel chain|layer(?:ed|ing))\b", "layered transfers"),
];

fn methods() -> &'static [(Regex, &'static str)] {
    static M: OnceLock<Vec<(Regex, &'static str)>> = OnceLock::new();
    M.get_or_init(|| {
        METHODS
            .iter()
            .map(|(p, label)| (Regex::new(p).expect("valid regex"), *label))
            .collect()
    })
}

fn chain_id_for(name: &str) -> &'static str {
    match name.to_ascii_lowercase().as_str() {
        "ethereum" => "ethereum",
        "bnb smart chain" | "binance smart chain" | "bnb chain" | "bsc" => "bsc",
        "polygon" => "polygon",
        "arbitrum" => "arbitrum",
        "optimism" => "optimism",
        "avalanche" => "avalanche",
        "bitcoin" => "bitcoin",
        "tron" => "tron",
        _ => "solana",
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Role {
    Attacker,
    Victim,
    Contract,
}

fn role_of(word: &str) -> Role {
    match word.to_ascii_lowercase().as_str() {
        "attacker" | "exploiter" | "hacker" => Role::Attacker,
        "victim" | "cold wallet" => Role::Victim,
        _ => Role::Contract,
    }
}

/// Sentence spans of `text`: split on line breaks and on `.`, `!`, `?`
/// followed by whitespace. Spans are trimmed and never empty.
pub fn sentences(text: &str) -> Vec<(usize, usize)> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut start = 0;
    let push = |s: usize, e: usize, out: &mut Vec<(usize, usize)>| {
        let piece = &text[s..e];
        let lead = piece.len() - piece.trim_start().len();
        let trail = piece.len() - piece.trim_end().len();
        if s + lead < e - trail {
            out.push((s + lead, e - trail));
        }
    };
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        if b == b'\n' {
            push(start, i, &mut out);
            start = i + 1;
        } else if matches!(b, b'.' | b'!' | b'?') && bytes.get(i + 1).is_some_and(|c| c.is_ascii_whitespace()) {
            push(start, i + 1, &mut out);
            start = i + 1;
        }
        i += 1;
    }
    push(start, bytes.len(), &mut out);
    out
}

/// Integer dollars from a decimal literal and a magnitude word, rounded half-up.
pub fn usd_to_integer(number: &str, magnitude: Option<&str>) -> Option<u64> {
    let cleaned: String = number.chars().filter(|c| *c != ',').collect();
    let (int, frac) = cleaned.split_once('.').unwrap_or((&cleaned, ""));
    let pow: u32 = match magnitude.map(str::to_ascii_lowercase).as_deref() {
        None => 0,
        Some("billion" | "bn" | "b") => 9,
        Some("million" | "mn" | "m") => 6,
        Some("thousand" | "k") => 3,
        Some(_) => return None,
    };
    let digits = format!("{int}{frac}");
    let scaled: u128 = digits.parse::<u128>().ok()?.checked_mul(10u128.pow(pow))?;
    let div = 10u128.checked_pow(frac.len() as u32)?;
    let q = scaled / div;
    let rounded = if (scaled % div) * 2 >= div { q + 1 } else { q };
    u64::try_from(rounded).ok()
}

fn normalize_decimal(number: &str) -> String {
    let cleaned: String = number.chars().filter(|c| *c != ',').collect();
    match cleaned.split_once('.') {
        Some((i, f)) => {
            let f = f.trim_end_matches('0');
            if f.is_empty() {
                i.to_owned()
            } else {
                format!("{i}.{f}")
            }
        }
        None => cleaned,
    }
}

/// 42-character address spans; longer hex runs (hashes) are skipped whole.
pub fn address_spans(text: &str) -> Vec<(usize, usize)> {
    hex_run()
        .find_iter(text)
        .filter(|m| m.as_str().len() == 42)
        .filter(|m| {
            let before = text[..m.start()].chars().next_back();
            let after = text[m.end()..].chars().next();
            !before.is_some_and(|c| c.is_ascii_alphanumeric()) && !after.is_some_and(|c| c.is_ascii_alphanumeric())
        })
        .map(|m| (m.start(), m.end()))
        .collect()
}

fn nearest_role(sentence: &str, addr: (usize, usize)) -> Option<Role> {
    let mut best: Option<(usize, Role)> = None;
    let mut tied = false;
    for m in role_words().find_iter(sentence) {
        let dist = if m.end() <= addr.0 {
            addr.0 - m.end()
        } else if m.start() >= addr.1 {
            m.start() - addr.1
        } else {
            continue;
        };
        let role = role_of(m.as_str());
        match best {
            Some((d, _)) if dist > d => {}
            Some((d, r)) if dist == d => tied |= r != role,
            _ => {
                best = Some((dist, role));
                tied = false;
            }
        }
    }
    if tied {
        None
    } else {
        best.map(|(_, r)| r)
    }
}

struct Summary<'a> {
    text: &'a str,
    clues: BTreeMap<ClueField, Vec<Candidate>>,
}

impl Summary<'_> {
    fn add(&mut self, field: ClueField, value: impl Into<String>, span: (usize, usize)) {
        let value = value.into();
        let snippet = self.text[span.0..span.1].to_owned();
        let list = self.clues.entry(field).or_default();
        if !list.iter().any(|c| c.value == value) {
            list.push(Candidate { value, snippet });
        }
    }
}

pub fn summarize(chunk: &DocumentChunk) -> ChunkSummary {
    let text = chunk.text.as_str();
    let mut s = Summary {
        text,
        clues: BTreeMap::new(),
    };

    for cap in labeled().captures_iter(text) {
        let field = match cap[1].to_ascii_lowercase().as_str() {
            "attack vector" => ClueField::AttackVector,
            "affected platform" => ClueField::AffectedPlatform,
            _ => ClueField::LaunderingPath,
        };
        let line = cap.get(0).expect("match");
        let line_text = line.as_str().trim();
        let start = line.start() + line.as_str().find(line_text).unwrap_or(0);
        s.add(field, &cap[2], (start, start + line_text.len()));
    }

    let mut usd_best: Option<(u64, (usize, usize))> = None;
    let mut usd_fallback: Option<(u64, (usize, usize))> = None;
    let mut tokens: BTreeMap<String, (String, (usize, usize))> = BTreeMap::new();
    let mut methods_seen = BTreeSet::new();

    for span in sentences(text) {
        let sentence = &text[span.0..span.1];
        let is_theft = theft().is_match(sentence);
        let is_laundering = laundering().is_match(sentence);

        for (a, b) in address_spans(sentence) {
            let hex = sentence[a..b].to_ascii_lowercase();
            match nearest_role(sentence, (a, b)) {
                Some(Role::Attacker) => s.add(ClueField::AttackerAddresses, hex, span),
                Some(Role::Victim) => s.add(ClueField::VictimAddresses, hex, span),
                Some(Role::Contract) => s.add(ClueField::ContractAddress, hex, span),
                None => s.add(ClueField::EvidenceSnippets, sentence, span),
            }
        }

        let mut amounts: Vec<(usize, usize, u64)> = Vec::new();
        for cap in usd_symbol().captures_iter(sentence) {
            let m = cap.get(0).expect("match");
            if let Some(v) = usd_to_integer(&cap[1], cap.get(2).map(|g| g.as_str())) {
                amounts.push((m.start(), m.end(), v));
            }
        }
        for cap in usd_words().captures_iter(sentence) {
            let m = cap.get(0).expect("match");
            if amounts.iter().any(|(a, b, _)| m.start() < *b && *a < m.end()) {
                continue;
            }
            if let Some(v) = usd_to_integer(&cap[1], cap.get(2).map(|g| g.as_str())) {
                amounts.push((m.start(), m.end(), v));
            }
        }
        let sentence_max = amounts.iter().map(|a| a.2).max();
        if let Some(v) = sentence_max {
            if is_theft {
                if usd_best.is_none_or(|(b, _)| v > b) {
                    usd_best = Some((v, span));
                }
            } else if !payout().is_match(sentence) && usd_fallback.is_none_or(|(b, _)| v > b) {
                usd_fallback = Some((v, span));
            }
        }

        if (is_theft || sentence_max.is_some()) && !is_laundering {
            for m in chain_names().find_iter(sentence) {
                s.add(ClueField::Chain, chain_id_for(m.as_str()), span);
            }
        }

        if !is_laundering {
            for cap in token_qty().captures_iter(sentence) {
                let m = cap.get(0).expect("match");
                let before = sentence[..m.start()].chars().next_back();
                if before.is_some_and(|c| c == '$' || c == '.' || c.is_ascii_alphanumeric()) {
                    continue;
                }
                let amount = normalize_decimal(&cap[1]);
                let entry = tokens.entry(cap[2].to_owned()).or_insert_with(|| (amount.clone(), span));
                let bigger = amount.parse::<f64>().unwrap_or(0.0) > entry.0.parse::<f64>().unwrap_or(0.0);
                if bigger {
                    *entry = (amount, span);
                }
            }
        } else {
            for (re, label) in methods() {
                if re.is_match(sentence) && methods_seen.insert(*label) {
                    s.add(ClueField::LaunderingMethods, *label, span);
                }
            }
        }
    }

    if let Some((v, span)) = usd_best.or(usd_fallback) {
        s.add(ClueField::StolenUsd, v.to_string(), span);
    }
    for (symbol, (amount, span)) in tokens {
        s.add(ClueField::StolenToken, format!("{symbol}:{amount}"), span);
    }

    ChunkSummary {
        chunk_id: chunk.chunk_id,
        candidate_clues: s.clues,
    }
}

const EXCERPT_MARK: &str = "Excerpt (chunk ";

/// Recovers `(chunk_id, chunk_text)` from a rendered extraction prompt.
pub fn parse_extract_prompt(prompt: &str) -> Option<(u32, &str)> {
    let at = prompt.rfind(EXCERPT_MARK)?;
    let rest = &prompt[at + EXCERPT_MARK.len()..];
    let id: u32 = rest[..rest.find(')')?].trim().parse().ok()?;
    let open = rest.find("<<<\n")? + 4;
    let body = &rest[open..];
    let close = body.rfind("\n>>>")?;
    Some((id, &body[..close]))
}

/// Answers extraction prompts with [`summarize`], serialised as the prompt's JSON shape.
pub fn answer_extract_prompt(prompt: &str) -> Option<String> {
    let (chunk_id, text) = parse_extract_prompt(prompt)?;
    let chunk = DocumentChunk {
        chunk_id,
        paragraph_range: (0, 0),
        text: text.to_owned(),
    };
    Some(serde_json::to_string(&summarize(&chunk).candidate_clues).expect("serialisable"))
}

/// Backend that only understands extraction prompts.
#[derive(Debug, Default, Clone, Copy)]
pub struct PatternBackend;

impl BackendPort for PatternBackend {
    fn complete(&self, prompt: &str, _temperature: f64, _max_tokens: u32) -> Result<String, BackendError> {
        answer_extract_prompt(prompt).ok_or_else(|| BackendError::Unsupported {
            backend: "patterns".into(),
        })
    }

    fn tag(&self) -> &str {
        "patterns"
    }
}
