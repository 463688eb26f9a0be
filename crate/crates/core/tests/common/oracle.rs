//! Brute-force depth-bounded BFS over the raw fixture rows. It never calls
//! into the tracer and reimplements the frontier priority from scratch.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Mutex;

use num_bigint::BigUint;
use num_traits::ToPrimitive;
use risktagger::chain_data::{ChainClient, NoCrossChain};
use risktagger::model::{Address, SuspicionLevel, TracerConfig, TransactionRecord};
use risktagger::tracer::{trace, TraceOptions};

use super::{attacker, fixture_client, ports_for, Wiring, FIXTURE_NOW};

struct Edge {
    to: Address,
    value: BigUint,
    ts: u64,
}

fn out_edges(rows: &[TransactionRecord], from: &Address) -> Vec<Edge> {
    rows.iter()
        .filter(|t| &t.from == from && t.to != *from && !t.is_error)
        .map(|t| Edge {
            to: t.to.clone(),
            value: t.value.parse().unwrap(),
            ts: t.time_stamp,
        })
        .collect()
}

fn as_f64(v: &BigUint) -> f64 {
    v.to_f64().unwrap()
}

/// Depth of every analyzed address. With `cap = None` this is plain
/// BFS layering; with a cap each layer keeps the best-scoring candidates.
pub fn oracle(
    client: &dyn ChainClient,
    seed: &Address,
    depth_limit: u32,
    cap: Option<usize>,
    cfg: &TracerConfig,
    level: &dyn Fn(&Address) -> SuspicionLevel,
) -> BTreeMap<Address, u32> {
    let mut depth_of = BTreeMap::new();
    let mut layer = vec![seed.clone()];
    for d in 0..depth_limit {
        if layer.is_empty() {
            break;
        }
        for a in &layer {
            depth_of.insert(a.clone(), d);
        }
        // candidate -> (inbound value, latest inbound time, flagged sender)
        let mut cand: BTreeMap<Address, (BigUint, u64, bool)> = BTreeMap::new();
        for a in &layer {
            let rows = client.fetch_account_graph(a).unwrap().txs;
            assert!(rows.len() <= cfg.k, "oracle assumes every row is retained");
            let flagged = matches!(level(a), SuspicionLevel::High | SuspicionLevel::Medium);
            for e in out_edges(&rows, a) {
                if depth_of.contains_key(&e.to) {
                    continue;
                }
                let slot = cand.entry(e.to).or_insert((BigUint::default(), 0, false));
                slot.0 += e.value;
                slot.1 = slot.1.max(e.ts);
                slot.2 |= flagged;
            }
        }
        let vmax = cand.values().map(|c| as_f64(&c.0)).fold(0.0, f64::max);
        let oldest = cand.values().map(|c| c.1).min().unwrap_or(FIXTURE_NOW);
        let mut scored: Vec<(f64, Address)> = cand
            .into_iter()
            .map(|(a, (v, ts, flag))| {
                let vnorm = if vmax > 0.0 { (as_f64(&v) / vmax).clamp(0.0, 1.0) } else { 0.0 };
                let rnorm = if FIXTURE_NOW <= oldest {
                    1.0
                } else {
                    (1.0 - (FIXTURE_NOW - ts) as f64 / (FIXTURE_NOW - oldest) as f64).clamp(0.0, 1.0)
                };
                let f = if flag { 1.0 } else { 0.0 };
                (cfg.value_weight * vnorm + cfg.recency_weight * rnorm + cfg.flag_weight * f, a)
            })
            .collect();
        scored.sort_by(|x, y| y.0.total_cmp(&x.0).then_with(|| x.1.cmp(&y.1)));
        layer = scored.into_iter().map(|(_, a)| a).take(cap.unwrap_or(usize::MAX)).collect();
    }
    depth_of
}

/// Compares tracer and oracle on the fixture for every `(D, cap)` pair.
/// Returns the number of accounts analyzed across all runs.
pub fn check_equivalence(depths: &[u32], caps: &[Option<usize>]) -> Result<usize, String> {
    let client = fixture_client();
    let wiring = Wiring::rules(&client, &NoCrossChain);
    let cache: Mutex<HashMap<Address, SuspicionLevel>> = Mutex::new(HashMap::new());
    let level = |a: &Address| {
        if let Some(l) = cache.lock().unwrap().get(a) {
            return *l;
        }
        let l = wiring.standalone_level(a, 100);
        cache.lock().unwrap().insert(a.clone(), l);
        l
    };
    let seed = attacker();
    let mut analyzed = 0;
    for &d in depths {
        for &cap in caps {
            let cfg = TracerConfig {
                max_depth: d,
                frontier_cap: cap,
                ..Default::default()
            };
            let expected = oracle(&client, &seed, d, cap, &cfg, &level);
            let opts = TraceOptions {
                now: FIXTURE_NOW,
                ..Default::default()
            };
            let out = trace(&[seed.clone()], &cfg, &ports_for(&wiring), &opts).map_err(|e| e.to_string())?;
            let got: BTreeMap<Address, u32> =
                out.state.l_all.iter().map(|r| (r.target_address.clone(), r.hop_depth)).collect();
            if got.len() != out.state.l_all.len() {
                return Err(format!("D={d} cap={cap:?}: an account was analyzed twice"));
            }
            if got != expected {
                let diff: Vec<_> = got.iter().filter(|(a, h)| expected.get(*a) != Some(h)).take(3).collect();
                return Err(format!(
                    "D={d} cap={cap:?}: {} analyzed vs {} expected, first differences {diff:?}",
                    got.len(),
                    expected.len()
                ));
            }
            let high: BTreeSet<_> = out.state.r_final.iter().map(|r| &r.target_address).collect();
            if out.state.l_all.iter().any(|r| high.contains(&r.target_address) != (r.suspicion_level == SuspicionLevel::High)) {
                return Err(format!("D={d} cap={cap:?}: R_final is not the High subset"));
            }
            analyzed += got.len();
        }
    }
    Ok(analyzed)
}
