// Follow a bridge deposit on ethereum to its withdrawal on bsc.

use std::path::Path;
use std::sync::Arc;

use risktagger::chain_data::{
    load_fixture_dir, BridgeMatcher, BridgeRegistry, ChainClient, CrossChainMatcher, MatchTolerance,
};

pub fn run_example() -> anyhow::Result<()> {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let chain = Arc::new(load_fixture_dir(root.join("chains"))?);
    let matcher = BridgeMatcher::new(BridgeRegistry::load(root.join("bridges.csv"))?, chain.clone(), MatchTolerance::default());
    let store = chain.store(&"ethereum".parse()?).expect("ethereum fixture");
    let mut found = 0;
    for a in store.addresses() {
        let txs = chain.fetch_account_graph(&a)?.txs;
        for pair in matcher.expand(&a, &txs).pairs {
            println!("{} on {} -> {} on {}", a, a.chain(), pair.destination(), pair.destination().chain());
            found += 1;
        }
    }
    anyhow::ensure!(found > 0, "no bridge hop found");
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run_example()
}
