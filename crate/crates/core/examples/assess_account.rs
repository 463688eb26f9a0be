// Rate one account with the rule backend, reflection included.

use std::path::Path;

use risktagger::chain_data::{load_fixture_dir, ChainClient};
use risktagger::model::{normalize_address, ChainId, SuspicionLevel};
use risktagger::prompts::PromptRegistry;
use risktagger::reasoner::{infer_risk, Blacklist, ReasonerConfig, RuleBackend};
use risktagger::translator::{build_subgraph, ScoreWeights};

pub fn run_example() -> anyhow::Result<()> {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let chain = load_fixture_dir(root.join("chains"))?;
    let blacklist = Blacklist::load(&root.join("blacklist.csv"))?;
    let attacker = normalize_address("0x47666fab8bd0ac7003bce3f5c3585383f09486e2", &ChainId::ethereum())?;
    let txs = chain.fetch_account_graph(&attacker)?.txs;
    let sub = build_subgraph(&attacker, &txs, &[], 100, 1_743_724_800, ScoreWeights::default());
    let r = infer_risk(&sub, &blacklist, &RuleBackend::default(), &PromptRegistry::builtin(), &ReasonerConfig::default())?;
    println!("{}", serde_json::to_string_pretty(&r)?);
    anyhow::ensure!(r.suspicion_level == SuspicionLevel::High);
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run_example()
}
