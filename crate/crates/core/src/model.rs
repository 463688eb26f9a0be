//! Shared domain types: chains, addresses, transaction rows, verdicts and
//! tracer configuration. Pure data, no I/O.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use num_bigint::BigUint;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("malformed address {0:?}")]
    MalformedAddress(String),
    #[error("invalid chain id {0:?}: expected non-empty lowercase ascii alphanumeric")]
    InvalidChain(String),
    #[error("malformed transaction hash {0:?}")]
    MalformedHash(String),
    #[error("field {field} is not an unsigned integer: {value:?}")]
    NotAnInteger { field: &'static str, value: String },
    #[error("timeStamp must be positive")]
    ZeroTimestamp,
    #[error("unknown suspicion level {0:?}")]
    UnknownLevel(String),
    #[error("invalid tracer config: {0}")]
    InvalidConfig(String),
}

/// Lowercase chain identifier such as `ethereum`, `bsc` or `polygon`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ChainId(String);

impl ChainId {
    pub fn new(name: impl Into<String>) -> Result<Self, ModelError> {
        let name = name.into();
        let ok = !name.is_empty()
            && name
                .bytes()
                .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit());
        if ok {
            Ok(Self(name))
        } else {
            Err(ModelError::InvalidChain(name))
        }
    }

    pub fn ethereum() -> Self {
        Self("ethereum".to_owned())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ChainId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for ChainId {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::new(s)
    }
}

impl Serialize for ChainId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for ChainId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(d)?;
        ChainId::new(raw).map_err(serde::de::Error::custom)
    }
}

/// A 20-byte EVM account on a specific chain, stored as lowercase `0x` hex.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "AddressWire")]
pub struct Address {
    hex: String,
    chain: ChainId,
}

#[derive(Deserialize)]
struct AddressWire {
    hex: String,
    chain: ChainId,
}

impl TryFrom<AddressWire> for Address {
    type Error = ModelError;
    fn try_from(w: AddressWire) -> Result<Self, Self::Error> {
        normalize_address(&w.hex, &w.chain)
    }
}

impl Address {
    pub fn hex(&self) -> &str {
        &self.hex
    }

    pub fn chain(&self) -> &ChainId {
        &self.chain
    }

    /// The `0x` + 4 hex digit form used when citing addresses in prose.
    pub fn short(&self) -> &str {
        &self.hex[..6]
    }

    pub fn with_chain(&self, chain: ChainId) -> Address {
        Address {
            hex: self.hex.clone(),
            chain,
        }
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.hex)
    }
}

/// Canonicalises any-case hex, with or without the `0x` prefix.
pub fn normalize_address(raw: &str, chain: &ChainId) -> Result<Address, ModelError> {
    let trimmed = raw.trim();
    let body = trimmed
        .strip_prefix("0x")
        .or_else(|| trimmed.strip_prefix("0X"))
        .unwrap_or(trimmed);
    if body.len() != 40 || !body.bytes().all(|b| b.is_ascii_hexdigit()) {
        return Err(ModelError::MalformedAddress(raw.to_owned()));
    }
    Ok(Address {
        hex: format!("0x{}", body.to_ascii_lowercase()),
        chain: chain.clone(),
    })
}

pub(crate) fn is_tx_hash(s: &str) -> bool {
    s.len() == 66 && s.starts_with("0x") && s[2..].bytes().all(|b| b.is_ascii_hexdigit())
}

pub(crate) fn is_unsigned_integer(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit())
}

/// Parses a decimal integer string of arbitrary size.
pub fn parse_amount(s: &str) -> Option<BigUint> {
    if !is_unsigned_integer(s) {
        return None;
    }
    BigUint::parse_bytes(s.as_bytes(), 10)
}

/// One canonical on-chain transfer or call row.
///
/// `value`, `gas`, `gasPrice` and `gasUsed` stay decimal strings: token
/// amounts routinely exceed 64 bits.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "TransactionRow", try_from = "TransactionRow")]
pub struct TransactionRecord {
    pub chain: ChainId,
    pub hash: String,
    pub from: Address,
    pub to: Address,
    pub value: String,
    pub time_stamp: u64,
    pub block_number: u64,
    pub token_symbol: String,
    pub contract_address: Option<Address>,
    pub is_error: bool,
    pub input: String,
    pub nonce: u64,
    pub block_hash: String,
    pub gas: String,
    pub gas_price: String,
    pub gas_used: String,
    pub confirmations: u64,
}

/// Flat wire form: addresses as hex strings, chain carried once.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub(crate) struct TransactionRow {
    pub chain: ChainId,
    pub hash: String,
    pub from: String,
    pub to: String,
    pub value: String,
    pub time_stamp: u64,
    pub block_number: u64,
    pub token_symbol: String,
    #[serde(default)]
    pub contract_address: Option<String>,
    pub is_error: bool,
    pub input: String,
    pub nonce: u64,
    pub block_hash: String,
    pub gas: String,
    pub gas_price: String,
    pub gas_used: String,
    pub confirmations: u64,
}

impl From<TransactionRecord> for TransactionRow {
    fn from(t: TransactionRecord) -> Self {
        TransactionRow {
            chain: t.chain,
            hash: t.hash,
            from: t.from.hex,
            to: t.to.hex,
            value: t.value,
            time_stamp: t.time_stamp,
            block_number: t.block_number,
            token_symbol: t.token_symbol,
            contract_address: t.contract_address.map(|a| a.hex),
            is_error: t.is_error,
            input: t.input,
            nonce: t.nonce,
            block_hash: t.block_hash,
            gas: t.gas,
            gas_price: t.gas_price,
            gas_used: t.gas_used,
            confirmations: t.confirmations,
        }
    }
}

impl TryFrom<TransactionRow> for TransactionRecord {
    type Error = ModelError;
    fn try_from(r: TransactionRow) -> Result<Self, Self::Error> {
        let contract_address = match r.contract_address.as_deref() {
            None | Some("") => None,
            Some(raw) => Some(normalize_address(raw, &r.chain)?),
        };
        let rec = TransactionRecord {
            from: normalize_address(&r.from, &r.chain)?,
            to: normalize_address(&r.to, &r.chain)?,
            chain: r.chain,
            hash: r.hash.to_ascii_lowercase(),
            value: r.value,
            time_stamp: r.time_stamp,
            block_number: r.block_number,
            token_symbol: r.token_symbol,
            contract_address,
            is_error: r.is_error,
            input: r.input,
            nonce: r.nonce,
            block_hash: r.block_hash,
            gas: r.gas,
            gas_price: r.gas_price,
            gas_used: r.gas_used,
            confirmations: r.confirmations,
        };
        rec.validate()?;
        Ok(rec)
    }
}

impl TransactionRecord {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !is_tx_hash(&self.hash) {
            return Err(ModelError::MalformedHash(self.hash.clone()));
        }
        if self.time_stamp == 0 {
            return Err(ModelError::ZeroTimestamp);
        }
        for (field, value) in [
            ("value", &self.value),
            ("gas", &self.gas),
            ("gasPrice", &self.gas_price),
            ("gasUsed", &self.gas_used),
        ] {
            if !is_unsigned_integer(value) {
                return Err(ModelError::NotAnInteger {
                    field,
                    value: value.clone(),
                });
            }
        }
        Ok(())
    }

    pub fn value_amount(&self) -> BigUint {
        parse_amount(&self.value).unwrap_or_default()
    }

    pub fn touches(&self, addr: &Address) -> bool {
        self.from.hex == addr.hex || self.to.hex == addr.hex
    }

    pub fn is_self_transfer(&self) -> bool {
        self.from.hex == self.to.hex
    }

    pub fn is_native(&self) -> bool {
        self.token_symbol.is_empty() && self.contract_address.is_none()
    }

    /// Asset key used to keep amounts of different tokens apart.
    pub fn asset_key(&self) -> String {
        match &self.contract_address {
            Some(c) if !self.token_symbol.is_empty() => format!("{}@{}", self.token_symbol, c.hex),
            _ => self.token_symbol.clone(),
        }
    }
}

/// A bridge deposit on one chain paired with its withdrawal on another.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrossChainPair {
    pub src_tx: TransactionRecord,
    pub dst_tx: TransactionRecord,
    pub token: String,
    pub amount_src: String,
    pub amount_dst: String,
    pub time_delta_s: i64,
    pub bridge_hint: Option<String>,
}

impl CrossChainPair {
    /// The account that received the bridged funds on the destination chain.
    pub fn destination(&self) -> &Address {
        &self.dst_tx.to
    }
}

/// Four-way verdict. Ordering: High > Medium > Low > NoSuspicion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SuspicionLevel {
    NoSuspicion,
    Low,
    Medium,
    High,
}

impl SuspicionLevel {
    pub const ALL: [SuspicionLevel; 4] = [
        SuspicionLevel::High,
        SuspicionLevel::Medium,
        SuspicionLevel::Low,
        SuspicionLevel::NoSuspicion,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SuspicionLevel::High => "High",
            SuspicionLevel::Medium => "Medium",
            SuspicionLevel::Low => "Low",
            SuspicionLevel::NoSuspicion => "No Suspicion",
        }
    }

    /// Case-insensitive; accepts "none" and "no suspicion" for the lowest level.
    pub fn parse(raw: &str) -> Result<Self, ModelError> {
        let norm: String = raw
            .trim()
            .to_ascii_lowercase()
            .split(|c: char| c.is_whitespace() || c == '_' || c == '-')
            .filter(|s| !s.is_empty())
            .collect::<Vec<_>>()
            .join(" ");
        match norm.as_str() {
            "high" => Ok(SuspicionLevel::High),
            "medium" => Ok(SuspicionLevel::Medium),
            "low" => Ok(SuspicionLevel::Low),
            "no suspicion" | "none" | "nosuspicion" | "no" => Ok(SuspicionLevel::NoSuspicion),
            _ => Err(ModelError::UnknownLevel(raw.to_owned())),
        }
    }
}

impl fmt::Display for SuspicionLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for SuspicionLevel {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for SuspicionLevel {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(d)?;
        SuspicionLevel::parse(&raw).map_err(serde::de::Error::custom)
    }
}

pub fn compare_suspicion(a: SuspicionLevel, b: SuspicionLevel) -> Ordering {
    a.cmp(&b)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RiskDimension {
    pub result: String,
    pub evidence: String,
}

impl RiskDimension {
    pub fn new(result: impl Into<String>, evidence: impl Into<String>) -> Self {
        Self {
            result: result.into(),
            evidence: evidence.into(),
        }
    }
}

/// Per-account verdict, as written to `labels.jsonl`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RiskAssessment {
    pub target_address: Address,
    pub suspicion_level: SuspicionLevel,
    pub transaction_patterns: RiskDimension,
    pub fund_flows: RiskDimension,
    pub associated_addresses: RiskDimension,
    pub temporal_signs: RiskDimension,
    pub justification: String,
    pub gaps: String,
    pub out_neighbors: Vec<Address>,
    pub hop_depth: u32,
    pub reflection_issues: Vec<String>,
    pub reasoner_backend: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TracerConfig {
    /// Maximum number of hops (`D`).
    pub max_depth: u32,
    /// Transactions retained per account by the translator (`k`).
    pub k: usize,
    /// Accounts kept per hop; `None` means unbounded.
    pub frontier_cap: Option<usize>,
    pub min_value_threshold: String,
    pub expand_levels: BTreeSet<SuspicionLevel>,
    pub recency_weight: f64,
    pub value_weight: f64,
    pub flag_weight: f64,
}

impl Default for TracerConfig {
    fn default() -> Self {
        Self {
            max_depth: 20,
            k: 100,
            frontier_cap: Some(500),
            min_value_threshold: "0".to_owned(),
            expand_levels: SuspicionLevel::ALL.into_iter().collect(),
            recency_weight: 0.3,
            value_weight: 0.4,
            flag_weight: 0.3,
        }
    }
}

impl TracerConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidConfig(m.to_owned()));
        if self.max_depth < 1 {
            return bad("max depth D must be >= 1");
        }
        if self.k < 1 {
            return bad("k must be >= 1");
        }
        if self.frontier_cap == Some(0) {
            return bad("frontier_cap must be >= 1");
        }
        if !is_unsigned_integer(&self.min_value_threshold) {
            return bad("min_value_threshold must be a decimal integer string");
        }
        let weights = [self.recency_weight, self.value_weight, self.flag_weight];
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return bad("weights must be non-negative");
        }
        if (weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return bad("recency, value and flag weights must sum to 1");
        }
        Ok(())
    }

    pub fn min_value(&self) -> BigUint {
        parse_amount(&self.min_value_threshold).unwrap_or_default()
    }
}
