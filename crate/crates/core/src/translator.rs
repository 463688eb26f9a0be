//! Turns an account's raw transaction set into the pruned, summarised
//! structure the reasoner reads.
//!
//! Pruning keeps the top-`k` transactions under
//! `value_weight * vnorm + recency_weight * rnorm`, where `vnorm` is the
//! value divided by the largest value of the same asset in the set and
//! `rnorm = 1 - (now - ts) / (now - oldest_ts)`. Ties go to the smaller hash.
//! Statistics always describe the full set, never just the retained rows.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap};

use chrono::{DateTime, SecondsFormat};
use num_bigint::BigUint;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::chain_data::token_name;
use crate::model::{Address, CrossChainPair, TransactionRecord};

pub const PAYLOAD_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreWeights {
    pub value: f64,
    pub recency: f64,
}

impl Default for ScoreWeights {
    fn default() -> Self {
        Self {
            value: 0.4,
            recency: 0.3,
        }
    }
}

/// Token symbol → decimals used for display-unit conversion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenDecimals(BTreeMap<String, u32>);

impl Default for TokenDecimals {
    fn default() -> Self {
        let table = [
            ("ETH", 18),
            ("stETH", 18),
            ("mETH", 18),
            ("cmETH", 18),
            ("WETH", 18),
            ("BNB", 18),
            ("POL", 18),
            ("MATIC", 18),
            ("DAI", 18),
            ("USDT", 6),
            ("USDC", 6),
        ];
        Self(table.into_iter().map(|(s, d)| (s.to_owned(), d)).collect())
    }
}

impl TokenDecimals {
    pub fn with(mut self, symbol: &str, decimals: u32) -> Self {
        self.0.insert(symbol.to_owned(), decimals);
        self
    }

    pub fn get(&self, symbol: &str) -> Option<u32> {
        self.0.get(symbol).copied()
    }

    /// `"1.0 ETH"` for 10^18 wei; unknown tokens as `"<raw> SYM (raw)"`.
    pub fn display(&self, raw: &str, symbol: &str) -> String {
        match self.get(symbol) {
            Some(d) => format!("{} {symbol}", format_units(raw, d)),
            None => format!("{raw} {symbol} (raw)"),
        }
    }

    /// Inverse of [`TokenDecimals::display`]: `(raw amount, symbol)`.
    pub fn parse_display(&self, shown: &str) -> Option<(BigUint, String)> {
        let mut parts = shown.split_whitespace();
        let amount = parts.next()?;
        let symbol = parts.next()?.to_owned();
        if parts.next() == Some("(raw)") {
            return Some((BigUint::parse_bytes(amount.as_bytes(), 10)?, symbol));
        }
        let decimals = self.get(&symbol)? as usize;
        let (int, frac) = amount.split_once('.').unwrap_or((amount, ""));
        if frac.len() > decimals || !int.bytes().chain(frac.bytes()).all(|b| b.is_ascii_digit()) {
            return None;
        }
        let digits = format!("{int}{frac}{}", "0".repeat(decimals - frac.len()));
        Some((BigUint::parse_bytes(digits.as_bytes(), 10)?, symbol))
    }
}

/// Exact decimal rendering of `raw / 10^decimals`, at least one fractional digit.
pub fn format_units(raw: &str, decimals: u32) -> String {
    let raw = raw.trim_start_matches('0');
    let d = decimals as usize;
    let padded = format!("{:0>width$}", raw, width = d + 1);
    let (int, frac) = padded.split_at(padded.len() - d);
    let frac = frac.trim_end_matches('0');
    format!("{int}.{}", if frac.is_empty() { "0" } else { frac })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AccountStats {
    pub in_count: u64,
    pub out_count: u64,
    /// Successful inbound value per token symbol, smallest units.
    pub in_total: BTreeMap<String, String>,
    pub out_total: BTreeMap<String, String>,
    pub first_seen: u64,
    pub last_seen: u64,
    pub distinct_counterparties_in: u64,
    pub distinct_counterparties_out: u64,
    pub tx_per_day_mean: f64,
    /// Most transactions inside any one-hour window.
    pub max_burst_1h: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccountSubgraph {
    pub center: Address,
    pub retained_txs: Vec<TransactionRecord>,
    pub cross_chain: Vec<CrossChainPair>,
    pub stats: AccountStats,
    pub truncated: bool,
}

/// Display symbol of a row: its token symbol, or the chain's native asset.
pub fn symbol_of(tx: &TransactionRecord) -> String {
    token_name(tx)
}

pub(crate) fn ratio(num: &BigUint, den: &BigUint) -> f64 {
    if den.is_zero() {
        return 0.0;
    }
    let (n, d) = (num.to_f64().unwrap_or(f64::MAX), den.to_f64().unwrap_or(f64::MAX));
    (n / d).clamp(0.0, 1.0)
}

/// Recency on the unit scale against `now` and the oldest timestamp seen.
pub(crate) fn recency_norm(ts: u64, oldest: u64, now: u64) -> f64 {
    if now <= oldest {
        return 1.0;
    }
    let age = now.saturating_sub(ts) as f64;
    (1.0 - age / (now - oldest) as f64).clamp(0.0, 1.0)
}

/// Pruning score of every transaction, in input order.
pub fn transaction_scores(txs: &[TransactionRecord], now: u64, weights: ScoreWeights) -> Vec<f64> {
    let mut max_by_asset: HashMap<String, BigUint> = HashMap::new();
    for t in txs {
        let v = t.value_amount();
        let slot = max_by_asset.entry(t.asset_key()).or_default();
        if v > *slot {
            *slot = v;
        }
    }
    let oldest = txs.iter().map(|t| t.time_stamp).min().unwrap_or(now);
    txs.iter()
        .map(|t| {
            let vnorm = ratio(&t.value_amount(), &max_by_asset[&t.asset_key()]);
            weights.value * vnorm + weights.recency * recency_norm(t.time_stamp, oldest, now)
        })
        .collect()
}

fn tie_order(a: &TransactionRecord, b: &TransactionRecord) -> Ordering {
    (&a.hash, &a.from, &a.to, a.asset_key(), &a.value).cmp(&(&b.hash, &b.from, &b.to, b.asset_key(), &b.value))
}

pub fn compute_stats(center: &Address, txs: &[TransactionRecord]) -> AccountStats {
    let mut stats = AccountStats::default();
    if txs.is_empty() {
        return stats;
    }
    let mut in_total: BTreeMap<String, BigUint> = BTreeMap::new();
    let mut out_total: BTreeMap<String, BigUint> = BTreeMap::new();
    let mut senders = BTreeSet::new();
    let mut receivers = BTreeSet::new();
    for t in txs {
        let incoming = t.to.hex() == center.hex();
        let outgoing = t.from.hex() == center.hex();
        if incoming {
            stats.in_count += 1;
            if !outgoing {
                senders.insert(t.from.hex());
            }
            if !t.is_error {
                *in_total.entry(symbol_of(t)).or_default() += t.value_amount();
            }
        }
        if outgoing {
            stats.out_count += 1;
            if !incoming {
                receivers.insert(t.to.hex());
            }
            if !t.is_error {
                *out_total.entry(symbol_of(t)).or_default() += t.value_amount();
            }
        }
    }
    stats.in_total = in_total.into_iter().map(|(k, v)| (k, v.to_string())).collect();
    stats.out_total = out_total.into_iter().map(|(k, v)| (k, v.to_string())).collect();
    stats.distinct_counterparties_in = senders.len() as u64;
    stats.distinct_counterparties_out = receivers.len() as u64;

    let mut times: Vec<u64> = txs.iter().map(|t| t.time_stamp).collect();
    times.sort_unstable();
    stats.first_seen = times[0];
    stats.last_seen = *times.last().expect("non-empty");
    let span_days = ((stats.last_seen - stats.first_seen) as f64 / 86_400.0).max(1.0);
    stats.tx_per_day_mean = txs.len() as f64 / span_days;
    let mut lo = 0;
    for hi in 0..times.len() {
        while times[hi] - times[lo] >= 3600 {
            lo += 1;
        }
        stats.max_burst_1h = stats.max_burst_1h.max((hi - lo + 1) as u64);
    }
    stats
}

pub fn build_subgraph(
    center: &Address,
    txs: &[TransactionRecord],
    pairs: &[CrossChainPair],
    k: usize,
    now: u64,
    weights: ScoreWeights,
) -> AccountSubgraph {
    let scores = transaction_scores(txs, now, weights);
    let mut order: Vec<usize> = (0..txs.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(Ordering::Equal)
            .then_with(|| tie_order(&txs[a], &txs[b]))
    });
    order.truncate(k);
    let mut retained: Vec<TransactionRecord> = order.into_iter().map(|i| txs[i].clone()).collect();
    retained.sort_by(|a, b| (a.time_stamp, a.block_number).cmp(&(b.time_stamp, b.block_number)).then_with(|| tie_order(a, b)));
    AccountSubgraph {
        center: center.clone(),
        retained_txs: retained,
        cross_chain: pairs.to_vec(),
        stats: compute_stats(center, txs),
        truncated: txs.len() > k,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PayloadTx {
    pub hash: String,
    pub from: String,
    pub to: String,
    pub value: String,
    #[serde(rename = "tokenSymbol")]
    pub token_symbol: String,
    #[serde(rename = "timeStamp")]
    pub time_stamp: String,
    #[serde(rename = "isError", default, skip_serializing_if = "std::ops::Not::not")]
    pub is_error: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PayloadCrossChain {
    pub src_hash: String,
    pub src_chain: String,
    pub dst_hash: String,
    pub dst_chain: String,
    pub destination: String,
    pub token: String,
    pub amount_src: String,
    pub amount_dst: String,
    pub time_delta_s: i64,
    pub bridge_hint: Option<String>,
}

/// Version 1 of the reasoner input. See `PAYLOAD.md` for the schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReasonerPayload {
    pub payload_version: u32,
    pub target_address: String,
    pub chain: String,
    pub statistics: AccountStats,
    pub transactions: Vec<PayloadTx>,
    pub cross_chain: Vec<PayloadCrossChain>,
    pub truncated: bool,
}

pub fn iso8601(ts: u64) -> String {
    DateTime::from_timestamp(ts as i64, 0)
        .map(|d| d.to_rfc3339_opts(SecondsFormat::Secs, true))
        .unwrap_or_default()
}

pub fn to_reasoner_payload(sub: &AccountSubgraph, decimals: &TokenDecimals) -> ReasonerPayload {
    ReasonerPayload {
        payload_version: PAYLOAD_VERSION,
        target_address: sub.center.hex().to_owned(),
        chain: sub.center.chain().to_string(),
        statistics: sub.stats.clone(),
        transactions: sub
            .retained_txs
            .iter()
            .map(|t| PayloadTx {
                hash: t.hash.clone(),
                from: t.from.hex().to_owned(),
                to: t.to.hex().to_owned(),
                value: decimals.display(&t.value, &symbol_of(t)),
                token_symbol: t.token_symbol.clone(),
                time_stamp: iso8601(t.time_stamp),
                is_error: t.is_error,
            })
            .collect(),
        cross_chain: sub
            .cross_chain
            .iter()
            .map(|p| PayloadCrossChain {
                src_hash: p.src_tx.hash.clone(),
                src_chain: p.src_tx.chain.to_string(),
                dst_hash: p.dst_tx.hash.clone(),
                dst_chain: p.dst_tx.chain.to_string(),
                destination: p.destination().hex().to_owned(),
                token: p.token.clone(),
                amount_src: p.amount_src.clone(),
                amount_dst: p.amount_dst.clone(),
                time_delta_s: p.time_delta_s,
                bridge_hint: p.bridge_hint.clone(),
            })
            .collect(),
        truncated: sub.truncated,
    }
}

impl ReasonerPayload {
    /// Canonical pretty JSON; identical payloads render byte-identically.
    pub fn render(&self) -> String {
        serde_json::to_string_pretty(self).expect("payload serialises")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{normalize_address, ChainId};
    use proptest::prelude::*;

    fn addr(n: u8) -> Address {
        normalize_address(&format!("0x{}", format!("{n:02x}").repeat(20)), &ChainId::ethereum()).unwrap()
    }

    fn tx(id: u32, from: u8, to: u8, value: &str, ts: u64, token: &str) -> TransactionRecord {
        TransactionRecord {
            chain: ChainId::ethereum(),
            hash: format!("0x{:064x}", id),
            from: addr(from),
            to: addr(to),
            value: value.into(),
            time_stamp: ts,
            block_number: u64::from(id),
            token_symbol: token.into(),
            contract_address: (!token.is_empty()).then(|| addr(0xcc)),
            is_error: false,
            input: "0x".into(),
            nonce: 0,
            block_hash: format!("0x{:064x}", 1),
            gas: "0".into(),
            gas_price: "0".into(),
            gas_used: "0".into(),
            confirmations: 1,
        }
    }

    const NOW: u64 = 1_750_000_000;

    /// Independent scorer: rationals computed directly from the rows.
    fn oracle_score(txs: &[TransactionRecord], i: usize, w: ScoreWeights) -> f64 {
        let same: Vec<f64> = txs
            .iter()
            .filter(|t| t.token_symbol == txs[i].token_symbol)
            .map(|t| t.value.parse::<f64>().unwrap())
            .collect();
        let max = same.iter().cloned().fold(0.0, f64::max);
        let v = if max == 0.0 { 0.0 } else { txs[i].value.parse::<f64>().unwrap() / max };
        let oldest = txs.iter().map(|t| t.time_stamp).min().unwrap();
        let r = if NOW == oldest { 1.0 } else { 1.0 - (NOW - txs[i].time_stamp) as f64 / (NOW - oldest) as f64 };
        w.value * v + w.recency * r
    }

    fn brute_force_top_k(txs: &[TransactionRecord], k: usize, w: ScoreWeights) -> BTreeSet<String> {
        let mut idx: Vec<usize> = (0..txs.len()).collect();
        idx.sort_by(|&a, &b| {
            oracle_score(txs, b, w)
                .partial_cmp(&oracle_score(txs, a, w))
                .unwrap()
                .then(txs[a].hash.cmp(&txs[b].hash))
        });
        idx.into_iter().take(k).map(|i| txs[i].hash.clone()).collect()
    }

    fn many(n: u32) -> Vec<TransactionRecord> {
        (0..n)
            .map(|i| {
                let (from, to) = if i % 3 == 0 { (1, 9) } else { (9, 1 + (i % 5) as u8) };
                let token = if i % 4 == 0 { "USDT" } else { "" };
                tx(i + 1, from, to, &((i * 7919) % 1013 + 1).to_string(), NOW - u64::from(i) * 3571, token)
            })
            .collect()
    }

    #[test]
    fn prunes_150_to_top_100_and_keeps_full_stats() {
        let txs = many(150);
        let center = addr(9);
        let w = ScoreWeights::default();
        let sub = build_subgraph(&center, &txs, &[], 100, NOW, w);
        assert_eq!(sub.retained_txs.len(), 100);
        assert!(sub.truncated);
        assert_eq!(sub.stats.in_count + sub.stats.out_count, 150);
        let kept: BTreeSet<String> = sub.retained_txs.iter().map(|t| t.hash.clone()).collect();
        assert_eq!(kept, brute_force_top_k(&txs, 100, w));
    }

    #[test]
    fn empty_set_gives_zeroed_stats() {
        let sub = build_subgraph(&addr(1), &[], &[], 10, NOW, ScoreWeights::default());
        assert!(sub.retained_txs.is_empty());
        assert!(!sub.truncated);
        assert_eq!(sub.stats, AccountStats::default());
        let p = to_reasoner_payload(&sub, &TokenDecimals::default());
        assert!(p.transactions.is_empty());
        assert_eq!(p.statistics.in_count, 0);
    }

    #[test]
    fn self_transfer_counts_both_ways() {
        let t = tx(1, 5, 5, "10", NOW - 10, "");
        let s = compute_stats(&addr(5), &[t]);
        assert_eq!((s.in_count, s.out_count), (1, 1));
        assert_eq!(s.distinct_counterparties_in, 0);
    }

    #[test]
    fn failed_transactions_excluded_from_totals_only() {
        let mut bad = tx(1, 2, 1, "500", NOW - 5, "");
        bad.is_error = true;
        let good = tx(2, 2, 1, "7", NOW - 4, "");
        let s = compute_stats(&addr(1), &[bad, good]);
        assert_eq!(s.in_count, 2);
        assert_eq!(s.in_total["ETH"], "7");
    }

    #[test]
    fn burst_window_counts_transactions_within_an_hour() {
        let txs: Vec<_> = (0..25u32).map(|i| tx(i + 1, 1, 2, "1", NOW - 10_000 + u64::from(i) * 100, "")).collect();
        // 100 s spacing: 36 fit in 3600 s, so all 25 count.
        assert_eq!(compute_stats(&addr(1), &txs).max_burst_1h, 25);
        let sparse: Vec<_> = (0..5u32).map(|i| tx(i + 1, 1, 2, "1", NOW - 100_000 + u64::from(i) * 3600, "")).collect();
        assert_eq!(compute_stats(&addr(1), &sparse).max_burst_1h, 1);
    }

    #[test]
    fn one_ether_displays_as_one_point_zero() {
        let t = tx(1, 1, 2, "1000000000000000000", NOW, "");
        let sub = build_subgraph(&addr(1), &[t], &[], 10, NOW, ScoreWeights::default());
        let p = to_reasoner_payload(&sub, &TokenDecimals::default());
        assert_eq!(p.transactions[0].value, "1.0 ETH");
        assert_eq!(p.transactions[0].time_stamp, "2025-06-15T15:06:40Z");
    }

    #[test]
    fn unit_formatting() {
        assert_eq!(format_units("1", 18), "0.000000000000000001");
        assert_eq!(format_units("0", 18), "0.0");
        assert_eq!(format_units("401000000000000000000000", 18), "401000.0");
        assert_eq!(format_units("1500000", 6), "1.5");
        let d = TokenDecimals::default();
        assert_eq!(d.display("42", "FOO"), "42 FOO (raw)");
        assert_eq!(d.parse_display("42 FOO (raw)").unwrap().0, BigUint::from(42u32));
        assert_eq!(d.parse_display("1.5 USDT").unwrap().0, BigUint::from(1_500_000u32));
    }

    #[test]
    fn payload_round_trips_all_rows() {
        let txs = many(100);
        let sub = build_subgraph(&addr(9), &txs, &[], 100, NOW, ScoreWeights::default());
        let text = to_reasoner_payload(&sub, &TokenDecimals::default()).render();
        let back: ReasonerPayload = serde_json::from_str(&text).unwrap();
        assert_eq!(back.transactions.len(), 100);
        assert_eq!(back.render(), text);
    }

    #[test]
    fn payload_sections_in_stable_order() {
        let sub = build_subgraph(&addr(1), &[], &[], 1, NOW, ScoreWeights::default());
        let text = to_reasoner_payload(&sub, &TokenDecimals::default()).render();
        let pos = |k: &str| text.find(&format!("\"{k}\"")).unwrap();
        assert!(pos("payload_version") < pos("target_address"));
        assert!(pos("target_address") < pos("statistics"));
        assert!(pos("statistics") < pos("transactions"));
        assert!(pos("transactions") < pos("cross_chain"));
    }

    fn arb_txs() -> impl Strategy<Value = Vec<TransactionRecord>> {
        prop::collection::vec((1u8..6, 1u8..6, 0u64..5000, 0u64..200_000, prop::bool::ANY), 0..24).prop_map(|rows| {
            rows.into_iter()
                .enumerate()
                .map(|(i, (f, t, v, age, token))| {
                    // Every row touches account 1.
                    let (f, t) = if f != 1 && t != 1 { (1, t) } else { (f, t) };
                    tx(i as u32 + 1, f, t, &v.to_string(), NOW - age, if token { "USDT" } else { "" })
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn pruning_dominance(txs in arb_txs(), k in 1usize..10) {
            let w = ScoreWeights::default();
            let sub = build_subgraph(&addr(1), &txs, &[], k, NOW, w);
            let kept: BTreeSet<&String> = sub.retained_txs.iter().map(|t| &t.hash).collect();
            let scores = transaction_scores(&txs, NOW, w);
            for (i, t) in txs.iter().enumerate() {
                for (j, u) in txs.iter().enumerate() {
                    if kept.contains(&t.hash) && !kept.contains(&u.hash) {
                        prop_assert!(scores[i] >= scores[j]);
                    }
                }
            }
            prop_assert_eq!(sub.truncated, txs.len() > k);
            prop_assert_eq!(sub.retained_txs.len(), txs.len().min(k));
            let expected = brute_force_top_k(&txs, k, w);
            let got: BTreeSet<String> = sub.retained_txs.iter().map(|t| t.hash.clone()).collect();
            prop_assert_eq!(got, expected);
        }

        #[test]
        fn stats_conservation(txs in arb_txs()) {
            let s = compute_stats(&addr(1), &txs);
            let selfs = txs.iter().filter(|t| t.is_self_transfer()).count() as u64;
            prop_assert_eq!(s.in_count + s.out_count, txs.len() as u64 + selfs);
            if !txs.is_empty() {
                prop_assert!(s.first_seen <= s.last_seen);
            }
        }

        #[test]
        fn payload_is_deterministic(txs in arb_txs()) {
            let sub = build_subgraph(&addr(1), &txs, &[], 8, NOW, ScoreWeights::default());
            let d = TokenDecimals::default();
            prop_assert_eq!(to_reasoner_payload(&sub, &d).render(), to_reasoner_payload(&sub, &d).render());
        }
    }
}
