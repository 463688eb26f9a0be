// Keep the top-k transactions of a busy account and render the reasoner payload.

use std::path::Path;

use risktagger::chain_data::{load_fixture_dir, ChainClient};
use risktagger::model::{normalize_address, ChainId};
use risktagger::translator::{build_subgraph, to_reasoner_payload, ScoreWeights, TokenDecimals};

pub fn run_example() -> anyhow::Result<()> {
    let chain = load_fixture_dir(Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/chains"))?;
    let attacker = normalize_address("0x47666fab8bd0ac7003bce3f5c3585383f09486e2", &ChainId::ethereum())?;
    let txs = chain.fetch_account_graph(&attacker)?.txs;
    let sub = build_subgraph(&attacker, &txs, &[], 5, 1_743_724_800, ScoreWeights::default());
    println!("kept {} of {} transactions", sub.retained_txs.len(), txs.len());
    println!("{}", to_reasoner_payload(&sub, &TokenDecimals::default()).render());
    anyhow::ensure!(sub.retained_txs.len() == 5.min(txs.len()));
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run_example()
}
