// Regenerates the synthetic trace fixture under `fixtures/`:
// `chains/ethereum.csv` (200 accounts), `chains/bsc.csv`, `bridges.csv` and `blacklist.csv`.
//
// ```bash
// cargo run --example gen_fixture -- crates/core/fixtures
// ```
//
// The graph is a seeded laundering tree hanging off the exploiter address,
// plus an unrelated population of ordinary wallets used as normal controls.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use risktagger::chain_data::FIXTURE_HEADER;
use sha2::{Digest, Sha256};

const ETH: u128 = 1_000_000_000_000_000_000;
const USDT: u128 = 1_000_000;
const T0: u64 = 1_740_147_180; // 2025-02-21T14:13:00Z
const ATTACKER: &str = "0x47666fab8bd0ac7003bce3f5c3585383f09486e2";
const VICTIM: &str = "0x1db92e2eebc8e0c075a02bea49a2935bcd2dfcf4";
const ETH_BRIDGE: &str = "0x3ee18b2214aff97000d974cf647e7c347e8fa585";
const BSC_BRIDGE: &str = "0xb6f6d86a8f9879a9c87f643768d9efc38c1da6e7";
const USDT_CONTRACT: &str = "0xdac17f958d2ee523a2206206994597c13d831ec7";
const BSC_USDT: &str = "0x55d398326f99059ff775485246999027b3197955";
const TOTAL_ETH_ACCOUNTS: usize = 200;

struct Tx {
    from: String,
    to: String,
    value: u128,
    ts: u64,
    token: Option<(&'static str, &'static str)>,
    failed: bool,
    input: String,
}

struct Ledger {
    txs: Vec<Tx>,
}

impl Ledger {
    fn native(&mut self, from: &str, to: &str, value: u128, ts: u64) {
        self.txs.push(Tx {
            from: from.into(),
            to: to.into(),
            value,
            ts,
            token: None,
            failed: false,
            input: "0x".into(),
        });
    }

    fn write(&self, path: &Path, chain: &str) -> std::io::Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(FIXTURE_HEADER)?;
        let mut rows: Vec<&Tx> = self.txs.iter().collect();
        rows.sort_by_key(|t| t.ts);
        let mut nonces = std::collections::HashMap::new();
        for (i, t) in rows.into_iter().enumerate() {
            let hash = digest(&format!("{chain}:{i}:{}:{}:{}", t.from, t.to, t.ts));
            let block = 21_800_000 + (t.ts - 1_739_000_000) / 12;
            let nonce = nonces.entry(t.from.clone()).or_insert(0u64);
            let (symbol, contract) = t.token.unwrap_or(("", ""));
            w.write_record([
                hash.as_str(),
                &t.from,
                &t.to,
                &t.value.to_string(),
                &t.ts.to_string(),
                &block.to_string(),
                symbol,
                contract,
                if t.failed { "1" } else { "0" },
                &t.input,
                &nonce.to_string(),
                &digest(&format!("{chain}:block:{block}")),
                "21000",
                "1000000000",
                "21000",
                "1000",
            ])?;
            *nonce += 1;
        }
        w.flush()
    }
}

fn digest(s: &str) -> String {
    format!("0x{}", hex::encode(Sha256::digest(s.as_bytes())))
}

fn fresh(rng: &mut ChaCha8Rng) -> String {
    let bytes: [u8; 20] = rng.gen();
    format!("0x{}", hex::encode(bytes))
}

/// 02:00 to 04:00 UTC on the day of `ts`.
fn at_night(ts: u64, rng: &mut ChaCha8Rng) -> u64 {
    ts - ts % 86_400 + 2 * 3600 + rng.gen_range(0..7000)
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures"));
    generate(&out)
}

/// Regenerates into a scratch directory and checks the committed files match.
pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let scratch = tempfile::tempdir()?;
    generate(scratch.path())?;
    let committed = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    for f in ["chains/ethereum.csv", "chains/bsc.csv", "bridges.csv", "blacklist.csv"] {
        let fresh = std::fs::read(scratch.path().join(f))?;
        if fresh != std::fs::read(committed.join(f))? {
            return Err(format!("{f} differs from the generator output").into());
        }
    }
    Ok(())
}

fn generate(out: &Path) -> Result<(), Box<dyn std::error::Error>> {
    std::fs::create_dir_all(out.join("chains"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut eth = Ledger { txs: Vec::new() };
    let mut bsc = Ledger { txs: Vec::new() };

    for i in 0..3 {
        eth.native(VICTIM, ATTACKER, 2000 * ETH, T0 + i * 60);
    }

    // Laundering tree by layer: (address, balance, time funds arrived).
    let mut layer_nodes: Vec<Vec<(String, u128, u64)>> = vec![vec![(ATTACKER.into(), 6000 * ETH, T0 + 180)]];
    let mut laundering = vec![ATTACKER.to_string()];
    let budget = 120;
    let night_layer = 5;
    let mut layer = 0;
    while laundering.len() < budget {
        let parents = layer_nodes[layer].clone();
        let mut next = Vec::new();
        // Past layer 3 only the first few branches keep moving funds.
        for (p, bal, t) in parents.iter().take(if layer >= 3 { 6 } else { usize::MAX }) {
            let fan = match layer {
                0 => 8,
                1 | 2 => rng.gen_range(1..=2),
                _ if rng.gen_bool(0.2) => 2,
                _ => 1,
            };
            for c in 0..fan {
                if laundering.len() >= budget {
                    break;
                }
                let child = fresh(&mut rng);
                let share = bal / (fan as u128 + 1) * rng.gen_range(80..=100) / 100;
                let mut ts = t + 600 + rng.gen_range(0..5400) + c as u64 * 30;
                if layer + 1 == night_layer {
                    ts = at_night(ts + 86_400, &mut rng);
                }
                eth.native(p, &child, share.max(ETH / 10_000), ts);
                laundering.push(child.clone());
                next.push((child, share, ts));
            }
        }
        if next.is_empty() {
            break;
        }
        layer_nodes.push(next);
        layer += 1;
    }

    // Aggregation then fast dispersion through one layer-3 collector.
    let collector = fresh(&mut rng);
    laundering.push(collector.clone());
    let feeders: Vec<_> = layer_nodes[2].iter().chain(&layer_nodes[3]).take(12).cloned().collect();
    let mut last_in = 0;
    for (f, bal, t) in &feeders {
        let ts = t + 7200 + rng.gen_range(0..600);
        eth.native(f, &collector, bal / 4, ts);
        last_in = last_in.max(ts);
    }
    let pot: u128 = feeders.iter().map(|(_, b, _)| b / 4).sum();
    for i in 0..3 {
        let r = fresh(&mut rng);
        laundering.push(r.clone());
        eth.native(&collector, &r, pot / 3, last_in + 240 + i * 90);
        let sink = &layer_nodes[layer][i as usize % layer_nodes[layer].len()].0;
        eth.native(&r, sink, pot / 4, last_in + 3 * 3600 + i * 50);
    }

    // A burst wallet: 24 small transfers inside one hour to two relays.
    let (burst, bal, t) = layer_nodes[2][0].clone();
    let relays = [fresh(&mut rng), fresh(&mut rng)];
    laundering.extend(relays.iter().cloned());
    for i in 0..24u64 {
        eth.native(&burst, &relays[i as usize % 2], bal / 100, t + 4 * 3600 + i * 120);
    }

    // Round-number transfer and a failed attempt from a layer-1 node.
    let (l1, _, t1) = layer_nodes[1][1].clone();
    let round_to = fresh(&mut rng);
    laundering.push(round_to.clone());
    eth.native(&l1, &round_to, 1000 * ETH, t1 + 9000);
    let ghost = fresh(&mut rng);
    eth.txs.push(Tx {
        from: l1.clone(),
        to: ghost.clone(),
        value: 50 * ETH,
        ts: t1 + 9100,
        token: None,
        failed: true,
        input: "0x".into(),
    });

    // Cycles back toward shallower layers and micro hops on the deepest one.
    for d in (3..layer).step_by(2) {
        let (deep, _, t) = layer_nodes[d + 1][0].clone();
        let back = &layer_nodes[d - 2][0].0;
        eth.native(&deep, back, ETH / 10, t + 20_000);
    }
    for (n, _, t) in layer_nodes[layer].clone() {
        eth.native(&n, ATTACKER, ETH / 10_000, t + 30_000);
    }

    // Token leg, zero-value approval and a bridge hop to BSC.
    let (tok_src, _, t2) = layer_nodes[2][1].clone();
    let tok_dst = fresh(&mut rng);
    laundering.push(tok_dst.clone());
    eth.txs.push(Tx {
        from: tok_src.clone(),
        to: tok_dst.clone(),
        value: 250_000 * USDT,
        ts: t2 + 3000,
        token: Some(("USDT", USDT_CONTRACT)),
        failed: false,
        input: "0xa9059cbb".into(),
    });
    let approved = fresh(&mut rng);
    eth.native(&tok_src, &approved, 0, t2 + 3100);
    eth.txs.push(Tx {
        from: tok_dst.clone(),
        to: ETH_BRIDGE.into(),
        value: 200_000 * USDT,
        ts: t2 + 5000,
        token: Some(("USDT", USDT_CONTRACT)),
        failed: false,
        input: "0x0f5287b0".into(),
    });
    let bsc_dst = fresh(&mut rng);
    let bsc_next = fresh(&mut rng);
    bsc.txs.push(Tx {
        from: BSC_BRIDGE.into(),
        to: bsc_dst.clone(),
        value: 199_600 * USDT,
        ts: t2 + 5600,
        token: Some(("USDT", BSC_USDT)),
        failed: false,
        input: "0x".into(),
    });
    bsc.txs.push(Tx {
        from: bsc_dst.clone(),
        to: bsc_next.clone(),
        value: 199_000 * USDT,
        ts: t2 + 9000,
        token: Some(("USDT", BSC_USDT)),
        failed: false,
        input: "0x".into(),
    });

    // Ordinary wallets, never touched by laundering funds.
    let mut seen: BTreeSet<String> = BTreeSet::new();
    for t in &eth.txs {
        seen.insert(t.from.clone());
        seen.insert(t.to.clone());
    }
    let normal_count = TOTAL_ETH_ACCOUNTS - seen.len();
    let normal: Vec<String> = (0..normal_count).map(|_| fresh(&mut rng)).collect();
    for (i, a) in normal.iter().enumerate() {
        for j in 0..rng.gen_range(2..6u64) {
            let b = normal.choose(&mut rng).expect("non-empty");
            if b == a {
                continue;
            }
            let day = rng.gen_range(0..30u64) * 86_400;
            let ts = T0 - T0 % 86_400 + day + 9 * 3600 + rng.gen_range(0..36_000) + j;
            eth.native(a, b, rng.gen_range(1..500u128) * ETH / 100, ts);
        }
        let next = &normal[(i + 1) % normal.len()];
        eth.native(a, next, ETH / 2, T0 + 40 * 86_400 + i as u64 * 600);
    }

    let mut all: BTreeSet<&str> = BTreeSet::new();
    for t in &eth.txs {
        all.insert(&t.from);
        all.insert(&t.to);
    }
    assert_eq!(all.len(), TOTAL_ETH_ACCOUNTS, "account count drifted");

    eth.write(&out.join("chains/ethereum.csv"), "ethereum")?;
    bsc.write(&out.join("chains/bsc.csv"), "bsc")?;
    std::fs::write(
        out.join("bridges.csv"),
        format!("# chain,address,label\nethereum,{ETH_BRIDGE},wormhole\nbsc,{BSC_BRIDGE},wormhole\n"),
    )?;
    std::fs::write(
        out.join("blacklist.csv"),
        format!(
            "address,label\n{ATTACKER},Bybit exploiter\n{},Bybit laundering relay\n",
            layer_nodes[1][0].0
        ),
    )?;
    println!(
        "wrote {} ethereum rows ({} laundering accounts, {} layers), {} bsc rows to {}",
        eth.txs.len(),
        laundering.len(),
        layer + 1,
        bsc.txs.len(),
        out.display()
    );
    Ok(())
}
