#![allow(dead_code)]

pub mod checks;
pub mod oracle;

use std::path::{Path, PathBuf};

use risktagger::chain_data::{load_fixture_dir, ChainClient, CrossChainMatcher, FixtureChainClient};
use risktagger::model::{normalize_address, Address, ChainId, SuspicionLevel};
use risktagger::prompts::PromptRegistry;
use risktagger::reasoner::{infer_risk, Blacklist, ReasonerConfig, RuleBackend};
use risktagger::tracer::TracePorts;
use risktagger::translator::{build_subgraph, ScoreWeights};

/// Reference time for the synthetic fixture (2025-04-04T00:00:00Z).
pub const FIXTURE_NOW: u64 = 1_743_724_800;

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn fixture_client() -> FixtureChainClient {
    load_fixture_dir(fixtures().join("chains")).expect("fixture csv files load")
}

pub fn attacker() -> Address {
    normalize_address("0x47666fab8bd0ac7003bce3f5c3585383f09486e2", &ChainId::ethereum()).unwrap()
}

pub struct Wiring<'a> {
    pub chain: &'a dyn ChainClient,
    pub cross_chain: &'a dyn CrossChainMatcher,
    pub backend: RuleBackend,
    pub prompts: PromptRegistry,
    pub blacklist: Blacklist,
    pub reasoner: ReasonerConfig,
}

impl<'a> Wiring<'a> {
    pub fn rules(chain: &'a dyn ChainClient, cross_chain: &'a dyn CrossChainMatcher) -> Self {
        Self {
            chain,
            cross_chain,
            backend: RuleBackend::default(),
            prompts: PromptRegistry::builtin(),
            blacklist: Blacklist::load(&fixtures().join("blacklist.csv")).unwrap(),
            reasoner: ReasonerConfig::default(),
        }
    }

    /// The level the rules give an account looked at on its own.
    pub fn standalone_level(&self, a: &Address, k: usize) -> SuspicionLevel {
        let txs = self.chain.fetch_account_graph(a).unwrap().txs;
        let sub = build_subgraph(a, &txs, &[], k, FIXTURE_NOW, ScoreWeights::default());
        infer_risk(&sub, &self.blacklist, &self.backend, &self.prompts, &self.reasoner)
            .unwrap()
            .suspicion_level
    }
}

pub fn ports_for<'a>(w: &'a Wiring<'a>) -> TracePorts<'a> {
    TracePorts {
        chain: w.chain,
        cross_chain: w.cross_chain,
        backend: &w.backend,
        prompts: &w.prompts,
        blacklist: &w.blacklist,
        reasoner: &w.reasoner,
    }
}
