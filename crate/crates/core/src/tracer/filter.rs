use std::collections::{BTreeMap, BTreeSet, HashSet};

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};

use crate::model::{Address, SuspicionLevel, TracerConfig};
use crate::translator::{ratio, recency_norm};

/// A transfer from an analyzed account to one of its out-neighbors.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InboundEdge {
    pub from: Address,
    pub to: Address,
    /// Smallest units of whatever asset moved; cross-chain edges carry the destination amount.
    pub value: String,
    pub time_stamp: u64,
    pub sender_level: SuspicionLevel,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PruneCounts {
    pub pruned_dup: u64,
    pub pruned_visited: u64,
    pub pruned_low_value: u64,
    pub pruned_cap: u64,
}

#[derive(Default)]
struct Inbound {
    value: BigUint,
    latest: u64,
    flagged: bool,
}

/// Dedup, drop visited and low-value candidates, then keep the
/// `frontier_cap` best by priority (descending, ties by address).
pub fn filter_frontier(
    c_next: &[Address],
    visited: &BTreeSet<Address>,
    edges: &[InboundEdge],
    cfg: &TracerConfig,
    now: u64,
    counts: &mut PruneCounts,
) -> Vec<Address> {
    let mut seen = HashSet::new();
    let mut survivors = Vec::new();
    for a in c_next {
        if !seen.insert(a) {
            counts.pruned_dup += 1;
        } else if visited.contains(a) {
            counts.pruned_visited += 1;
        } else {
            survivors.push(a.clone());
        }
    }

    let mut inbound: BTreeMap<&Address, Inbound> = BTreeMap::new();
    for e in edges {
        let slot = inbound.entry(&e.to).or_default();
        slot.value += e.value.parse::<BigUint>().unwrap_or_default();
        slot.latest = slot.latest.max(e.time_stamp);
        slot.flagged |= matches!(e.sender_level, SuspicionLevel::High | SuspicionLevel::Medium);
    }
    let empty = Inbound::default();
    let min_value = cfg.min_value();
    survivors.retain(|a| {
        let keep = inbound.get(a).unwrap_or(&empty).value >= min_value;
        if !keep {
            counts.pruned_low_value += 1;
        }
        keep
    });

    let of = |a: &Address| inbound.get(a).unwrap_or(&empty);
    let vmax = survivors.iter().map(|a| &of(a).value).max().cloned().unwrap_or_default();
    let oldest = survivors.iter().map(|a| of(a).latest).min().unwrap_or(now);
    let mut scored: Vec<(f64, Address)> = survivors
        .into_iter()
        .map(|a| {
            let i = of(&a);
            let flag = if i.flagged { 1.0 } else { 0.0 };
            let score = cfg.value_weight * ratio(&i.value, &vmax)
                + cfg.recency_weight * recency_norm(i.latest, oldest, now)
                + cfg.flag_weight * flag;
            (score, a)
        })
        .collect();
    scored.sort_by(|x, y| y.0.total_cmp(&x.0).then_with(|| x.1.cmp(&y.1)));
    if let Some(cap) = cfg.frontier_cap {
        if scored.len() > cap {
            counts.pruned_cap += (scored.len() - cap) as u64;
            scored.truncate(cap);
        }
    }
    scored.into_iter().map(|(_, a)| a).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{normalize_address, ChainId};

    fn a(n: u8) -> Address {
        normalize_address(&format!("0x{:040x}", n), &ChainId::ethereum()).unwrap()
    }

    fn edge(to: u8, value: u64, ts: u64, level: SuspicionLevel) -> InboundEdge {
        InboundEdge {
            from: a(0),
            to: a(to),
            value: value.to_string(),
            time_stamp: ts,
            sender_level: level,
        }
    }

    #[test]
    fn dedup_and_cycle_break() {
        let visited = BTreeSet::from([a(2)]);
        let edges = [edge(1, 5, 10, SuspicionLevel::Low), edge(2, 5, 10, SuspicionLevel::Low)];
        let mut c = PruneCounts::default();
        let out = filter_frontier(&[a(1), a(1), a(2)], &visited, &edges, &TracerConfig::default(), 100, &mut c);
        assert_eq!(out, vec![a(1)]);
        assert_eq!((c.pruned_dup, c.pruned_visited), (1, 1));
    }

    #[test]
    fn zero_value_funding_is_pruned_above_threshold() {
        let cfg = TracerConfig {
            min_value_threshold: "1".into(),
            ..Default::default()
        };
        let edges = [edge(1, 0, 10, SuspicionLevel::High), edge(2, 3, 10, SuspicionLevel::Low)];
        let mut c = PruneCounts::default();
        let out = filter_frontier(&[a(1), a(2)], &BTreeSet::new(), &edges, &cfg, 100, &mut c);
        assert_eq!(out, vec![a(2)]);
        assert_eq!(c.pruned_low_value, 1);
    }

    #[test]
    fn cap_keeps_highest_priority() {
        // now = 100, oldest inbound at t = 0.
        // 1: v=100 t=0   High   -> .4*1.00 + .3*0.0 + .3 = 0.70
        // 2: v=50  t=100 Low    -> .4*0.50 + .3*1.0      = 0.50
        // 3: v=10  t=50  Medium -> .4*0.10 + .3*0.5 + .3 = 0.49
        // 4: v=80  t=50  Low    -> .4*0.80 + .3*0.5      = 0.47
        // 5: v=0   t=100 None   -> .3*1.0                = 0.30
        let edges = [
            edge(1, 100, 0, SuspicionLevel::High),
            edge(2, 50, 100, SuspicionLevel::Low),
            edge(3, 10, 50, SuspicionLevel::Medium),
            edge(4, 80, 50, SuspicionLevel::Low),
            edge(5, 0, 100, SuspicionLevel::NoSuspicion),
        ];
        let cfg = TracerConfig {
            frontier_cap: Some(3),
            ..Default::default()
        };
        let mut c = PruneCounts::default();
        let cands: Vec<_> = (1..=5).map(a).collect();
        let out = filter_frontier(&cands, &BTreeSet::new(), &edges, &cfg, 100, &mut c);
        assert_eq!(out, vec![a(1), a(2), a(3)]);
        assert_eq!(c.pruned_cap, 2);
    }

    #[test]
    fn ties_break_by_address() {
        let edges = [edge(9, 5, 10, SuspicionLevel::Low), edge(4, 5, 10, SuspicionLevel::Low)];
        let mut c = PruneCounts::default();
        let out = filter_frontier(&[a(9), a(4)], &BTreeSet::new(), &edges, &TracerConfig::default(), 10, &mut c);
        assert_eq!(out, vec![a(4), a(9)]);
    }
}
