use std::collections::{BTreeMap, HashSet};
use std::path::Path;
use std::sync::{Arc, Mutex};

use num_bigint::BigUint;
use tracing::debug;

use super::{ChainClient, ChainError, CrossChainExpansion, CrossChainMatcher, UnmatchedDeposit};
use crate::model::{normalize_address, Address, ChainId, CrossChainPair, TransactionRecord};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BridgeEntry {
    pub address: Address,
    /// Entries sharing a label are the same bridge on different chains.
    pub label: String,
}

/// Declarative allowlist of bridge contracts plus calldata selector hints.
#[derive(Debug, Clone, Default)]
pub struct BridgeRegistry {
    entries: Vec<BridgeEntry>,
    /// 4-byte selector (`0x` + 8 hex) → bridge label.
    selector_hints: BTreeMap<String, String>,
}

impl BridgeRegistry {
    pub fn new(entries: Vec<BridgeEntry>) -> Self {
        Self {
            entries,
            selector_hints: BTreeMap::new(),
        }
    }

    pub fn with_selector_hint(mut self, selector: &str, label: &str) -> Self {
        self.selector_hints
            .insert(selector.to_ascii_lowercase(), label.to_owned());
        self
    }

    /// Parses lines of `chain,address,label`. `#` starts a comment.
    /// A line `selector,0x44bc937b,label` registers a calldata hint instead.
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut reg = BridgeRegistry::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            if cols.len() != 3 {
                return Err(format!("line {}: expected chain,address,label", i + 1));
            }
            if cols[0] == "selector" {
                reg = reg.with_selector_hint(cols[1], cols[2]);
                continue;
            }
            let chain = ChainId::new(cols[0]).map_err(|e| format!("line {}: {e}", i + 1))?;
            let address = normalize_address(cols[1], &chain).map_err(|e| format!("line {}: {e}", i + 1))?;
            reg.entries.push(BridgeEntry {
                address,
                label: cols[2].to_owned(),
            });
        }
        Ok(reg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ChainError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ChainError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text).map_err(|message| ChainError::ParseError {
            path: path.to_path_buf(),
            rows: vec![super::RowError { line: 0, message }],
        })
    }

    pub fn entries(&self) -> &[BridgeEntry] {
        &self.entries
    }

    fn label_of(&self, addr: &Address) -> Option<&str> {
        self.entries
            .iter()
            .find(|e| &e.address == addr)
            .map(|e| e.label.as_str())
    }

    fn hinted_label(&self, input: &str) -> Option<&str> {
        let input = input.to_ascii_lowercase();
        if input.len() < 10 {
            return None;
        }
        self.selector_hints.get(&input[..10]).map(String::as_str)
    }

    fn counterparts<'a>(&'a self, label: &'a str, src: &'a ChainId) -> impl Iterator<Item = &'a Address> + 'a {
        self.entries
            .iter()
            .filter(move |e| e.label == label && e.address.chain() != src)
            .map(|e| &e.address)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchTolerance {
    /// Relative amount tolerance, fraction of the deposit (0.01 = 1%).
    pub amount: f64,
    /// Maximum seconds between deposit and withdrawal.
    pub window_s: u64,
    /// Allowed seconds a withdrawal may precede its deposit.
    pub clock_skew_s: u64,
}

impl Default for MatchTolerance {
    fn default() -> Self {
        Self {
            amount: 0.01,
            window_s: 3600,
            clock_skew_s: 0,
        }
    }
}

impl MatchTolerance {
    pub fn amount_ok(&self, src: &BigUint, dst: &BigUint) -> bool {
        let diff = if src > dst { src - dst } else { dst - src };
        let ppm = BigUint::from((self.amount * 1e6).round().max(0.0) as u64);
        diff * BigUint::from(1_000_000u32) <= ppm * src
    }

    pub fn time_ok(&self, src_ts: u64, dst_ts: u64) -> bool {
        dst_ts + self.clock_skew_s >= src_ts && dst_ts <= src_ts + self.window_s
    }
}

/// Native asset symbol used to compare tokens across chains.
pub fn native_symbol(chain: &ChainId) -> String {
    match chain.as_str() {
        "ethereum" | "arbitrum" | "optimism" | "base" => "ETH".into(),
        "bsc" => "BNB".into(),
        "polygon" => "POL".into(),
        "avalanche" => "AVAX".into(),
        other => other.to_ascii_uppercase(),
    }
}

pub fn token_name(tx: &TransactionRecord) -> String {
    if tx.token_symbol.is_empty() {
        native_symbol(&tx.chain)
    } else {
        tx.token_symbol.clone()
    }
}

/// Pairs bridge deposits with destination-chain withdrawals.
///
/// A deposit is an outgoing, successful transfer to a registered bridge
/// address or one whose calldata starts with a registered selector.
/// Withdrawals are outgoing transfers of the same-label bridge on another
/// chain; they match on token, amount within tolerance and time window.
/// Each withdrawal is used at most once.
pub struct BridgeMatcher {
    registry: BridgeRegistry,
    client: Arc<dyn ChainClient>,
    tolerance: MatchTolerance,
    withdrawals: Mutex<BTreeMap<Address, Arc<Vec<TransactionRecord>>>>,
}

impl BridgeMatcher {
    pub fn new(registry: BridgeRegistry, client: Arc<dyn ChainClient>, tolerance: MatchTolerance) -> Self {
        Self {
            registry,
            client,
            tolerance,
            withdrawals: Mutex::new(BTreeMap::new()),
        }
    }

    fn withdrawals_of(&self, bridge: &Address) -> Result<Arc<Vec<TransactionRecord>>, ChainError> {
        if let Some(hit) = self.withdrawals.lock().expect("matcher cache poisoned").get(bridge) {
            return Ok(hit.clone());
        }
        let rows: Vec<TransactionRecord> = self
            .client
            .fetch_account_graph(bridge)?
            .txs
            .into_iter()
            .filter(|t| &t.from == bridge && !t.is_error && !t.is_self_transfer())
            .collect();
        let rows = Arc::new(rows);
        self.withdrawals
            .lock()
            .expect("matcher cache poisoned")
            .insert(bridge.clone(), rows.clone());
        Ok(rows)
    }
}

impl CrossChainMatcher for BridgeMatcher {
    fn expand(&self, address: &Address, txs: &[TransactionRecord]) -> CrossChainExpansion {
        let mut deposits: Vec<(&TransactionRecord, String)> = txs
            .iter()
            .filter(|t| &t.from == address && !t.is_error && !t.is_self_transfer())
            .filter_map(|t| {
                self.registry
                    .label_of(&t.to)
                    .or_else(|| self.registry.hinted_label(&t.input))
                    .map(|l| (t, l.to_owned()))
            })
            .collect();
        deposits.sort_by(|a, b| (a.0.time_stamp, &a.0.hash).cmp(&(b.0.time_stamp, &b.0.hash)));

        let mut out = CrossChainExpansion::default();
        let mut used: HashSet<(String, String)> = HashSet::new();
        for (dep, label) in deposits {
            let src_amount = dep.value_amount();
            let token = token_name(dep);
            let mut best: Option<(u64, BigUint, &TransactionRecord)> = None;
            let mut fetch_errors = Vec::new();
            let counterparts: Vec<Address> = self.registry.counterparts(&label, &dep.chain).cloned().collect();
            let mut pools = Vec::new();
            for bridge in &counterparts {
                match self.withdrawals_of(bridge) {
                    Ok(rows) => pools.push(rows),
                    Err(e) => fetch_errors.push(format!("{}: {e}", bridge.chain())),
                }
            }
            for w in pools.iter().flat_map(|p| p.iter()) {
                let key = (w.chain.to_string(), w.hash.clone());
                if used.contains(&key) || token_name(w) != token {
                    continue;
                }
                let dst_amount = w.value_amount();
                if !self.tolerance.amount_ok(&src_amount, &dst_amount)
                    || !self.tolerance.time_ok(dep.time_stamp, w.time_stamp)
                {
                    continue;
                }
                let dt = w.time_stamp.abs_diff(dep.time_stamp);
                let da = if src_amount > dst_amount {
                    &src_amount - &dst_amount
                } else {
                    &dst_amount - &src_amount
                };
                let better = match &best {
                    None => true,
                    Some((bdt, bda, bw)) => (dt, &da, &w.hash) < (*bdt, bda, &bw.hash),
                };
                if better {
                    best = Some((dt, da, w));
                }
            }
            match best {
                Some((_, _, w)) => {
                    used.insert((w.chain.to_string(), w.hash.clone()));
                    out.pairs.push(CrossChainPair {
                        src_tx: dep.clone(),
                        dst_tx: w.clone(),
                        token: token.clone(),
                        amount_src: dep.value.clone(),
                        amount_dst: w.value.clone(),
                        time_delta_s: w.time_stamp as i64 - dep.time_stamp as i64,
                        bridge_hint: Some(label),
                    });
                }
                None => {
                    let reason = if fetch_errors.is_empty() {
                        format!("no {token} withdrawal within tolerance on the {label} counterpart chains")
                    } else {
                        format!("destination fetch failed: {}", fetch_errors.join("; "))
                    };
                    debug!(hash = %dep.hash, %reason, "unmatched bridge deposit");
                    out.unmatched.push(UnmatchedDeposit {
                        hash: dep.hash.clone(),
                        reason,
                    });
                }
            }
        }
        out
    }
}

/// Matcher for runs without any bridge configuration.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoCrossChain;

impl CrossChainMatcher for NoCrossChain {
    fn expand(&self, _address: &Address, _txs: &[TransactionRecord]) -> CrossChainExpansion {
        CrossChainExpansion::default()
    }
}
