// Trace the synthetic laundering tree hop by hop and print the level mix per layer.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use risktagger::chain_data::{load_fixture_dir, BridgeMatcher, BridgeRegistry, MatchTolerance};
use risktagger::model::{normalize_address, ChainId, TracerConfig};
use risktagger::prompts::PromptRegistry;
use risktagger::reasoner::{Blacklist, ReasonerConfig, RuleBackend};
use risktagger::tracer::{level_histogram, trace, TraceOptions, TracePorts};

pub fn run_example() -> anyhow::Result<()> {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let chain = Arc::new(load_fixture_dir(root.join("chains"))?);
    let bridges = BridgeMatcher::new(BridgeRegistry::load(root.join("bridges.csv"))?, chain.clone(), MatchTolerance::default());
    let (backend, prompts) = (RuleBackend::default(), PromptRegistry::builtin());
    let blacklist = Blacklist::load(&root.join("blacklist.csv"))?;
    let reasoner = ReasonerConfig::default();
    let ports = TracePorts {
        chain: chain.as_ref(),
        cross_chain: &bridges,
        backend: &backend,
        prompts: &prompts,
        blacklist: &blacklist,
        reasoner: &reasoner,
    };
    let seed = normalize_address("0x47666fab8bd0ac7003bce3f5c3585383f09486e2", &ChainId::ethereum())?;
    let opts = TraceOptions {
        now: 1_743_724_800,
        ..Default::default()
    };
    let out = trace(&[seed], &TracerConfig::default(), &ports, &opts)?;

    let mut layers: BTreeMap<u32, Vec<&str>> = BTreeMap::new();
    for r in &out.state.l_all {
        layers.entry(r.hop_depth).or_default().push(r.suspicion_level.as_str());
    }
    for (hop, levels) in &layers {
        println!("hop {hop:>2}: {} account(s) {:?}", levels.len(), levels);
    }
    println!("{:?}", level_histogram(&out.state.l_all));
    println!("pruned: {:?}", out.state.diagnostics.pruned);
    anyhow::ensure!(out.finished && !out.state.r_final.is_empty());
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run_example()
}
