// Fetch an account from a local stub of the explorer API, then again from the on-disk cache.

use std::path::Path;

use risktagger::chain_data::{load_fixture, ChainClient, EtherscanClient, FetchCache, LiveChainConfig, RetryPolicy};
use risktagger::model::{normalize_address, ChainId};
use risktagger::replay::{etherscan_responder, ReplayServer};

pub fn run_example() -> anyhow::Result<()> {
    let store = load_fixture(Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/chains/ethereum.csv"))?;
    let server = ReplayServer::start(etherscan_responder(store));
    let cache = tempfile::tempdir()?;
    let client = |rps| {
        let mut cfg = LiveChainConfig::new(ChainId::ethereum(), server.url("/api"));
        cfg.requests_per_second = rps;
        EtherscanClient::new([cfg], Some(FetchCache::new(cache.path())), RetryPolicy::default(), 2)
    };
    let attacker = normalize_address("0x47666fab8bd0ac7003bce3f5c3585383f09486e2", &ChainId::ethereum())?;

    let cold = client(100.0);
    let graph = cold.fetch_account_graph(&attacker)?;
    println!("{} transactions, {} upstream request(s)", graph.txs.len(), cold.request_count());

    let warm = client(100.0);
    let again = warm.fetch_account_graph(&attacker)?;
    println!("cached fetch: {} upstream request(s)", warm.request_count());
    anyhow::ensure!(again.txs == graph.txs && warm.request_count() == 0);
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run_example()
}
