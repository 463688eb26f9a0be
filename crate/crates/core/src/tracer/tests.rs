use std::collections::BTreeMap;

use super::*;
use crate::backend::BackendError;
use crate::chain_data::{AccountTransactions, Capabilities, FixtureChainClient, FixtureStore, NoCrossChain};
use crate::model::{normalize_address, ChainId, TransactionRecord};

const T: u64 = 1_740_000_000;

fn addr(name: char) -> Address {
    let hex: String = std::iter::repeat(name).take(40).collect();
    normalize_address(&format!("0x{hex}"), &ChainId::ethereum()).unwrap()
}

fn tx(n: u64, from: char, to: char) -> TransactionRecord {
    TransactionRecord {
        chain: ChainId::ethereum(),
        hash: format!("0x{n:064x}"),
        from: addr(from),
        to: addr(to),
        value: "1000000000000000000".into(),
        time_stamp: T + n * 60,
        block_number: n,
        token_symbol: String::new(),
        contract_address: None,
        is_error: false,
        input: "0x".into(),
        nonce: 0,
        block_hash: "0x00".into(),
        gas: "21000".into(),
        gas_price: "1".into(),
        gas_used: "21000".into(),
        confirmations: 1,
    }
}

/// Seed `5` pays `a` and `b`; `a` pays `c`.
fn star() -> FixtureChainClient {
    FixtureChainClient::new([FixtureStore::new(
        ChainId::ethereum(),
        vec![tx(1, '5', 'a'), tx(2, '5', 'b'), tx(3, 'a', 'c')],
    )])
}

/// Rates accounts from a fixed table, keyed by the address named in the prompt.
struct ByAddress(BTreeMap<String, (&'static str, usize)>);

impl ByAddress {
    fn star() -> Self {
        Self(BTreeMap::from([
            (addr('5').hex().to_owned(), ("No Suspicion", 0)),
            (addr('a').hex().to_owned(), ("High", 2)),
            (addr('b').hex().to_owned(), ("Low", 1)),
            (addr('c').hex().to_owned(), ("No Suspicion", 0)),
        ]))
    }
}

impl BackendPort for ByAddress {
    fn complete(&self, prompt: &str, _: f64, _: u32) -> Result<String, BackendError> {
        let (level, risky) = self
            .0
            .iter()
            .find(|(a, _)| prompt.contains(&format!("core address {a}")))
            .map(|(_, v)| *v)
            .ok_or_else(|| BackendError::Unsupported { backend: "table".into() })?;
        let mut o = serde_json::json!({ "suspicion_level": level });
        for (i, k) in crate::reasoner::verdict::DIMENSION_KEYS.iter().enumerate() {
            let result = if i < risky { "Suspicious" } else { "No anomaly" };
            o[*k] = serde_json::json!({ "result": result, "evidence": "" });
        }
        Ok(o.to_string())
    }

    fn tag(&self) -> &str {
        "table"
    }
}

struct Parts {
    prompts: PromptRegistry,
    blacklist: Blacklist,
    reasoner: ReasonerConfig,
}

fn parts() -> Parts {
    Parts {
        prompts: PromptRegistry::builtin(),
        blacklist: Blacklist::default(),
        reasoner: ReasonerConfig::default(),
    }
}

fn ports<'a>(p: &'a Parts, chain: &'a dyn ChainClient, backend: &'a dyn BackendPort) -> TracePorts<'a> {
    TracePorts {
        chain,
        cross_chain: &NoCrossChain,
        backend,
        prompts: &p.prompts,
        blacklist: &p.blacklist,
        reasoner: &p.reasoner,
    }
}

fn opts() -> TraceOptions {
    TraceOptions {
        now: T + 86_400,
        ..Default::default()
    }
}

#[test]
fn star_graph() {
    let (p, chain, backend) = (parts(), star(), ByAddress::star());
    let cfg = TracerConfig {
        max_depth: 3,
        ..Default::default()
    };
    let out = trace(&[addr('5')], &cfg, &ports(&p, &chain, &backend), &opts()).unwrap();
    assert!(out.finished);
    let hops: Vec<(Address, u32)> = out.state.l_all.iter().map(|r| (r.target_address.clone(), r.hop_depth)).collect();
    assert_eq!(hops, vec![(addr('5'), 0), (addr('a'), 1), (addr('b'), 1), (addr('c'), 2)]);
    let risky: Vec<_> = out.state.r_final.iter().map(|r| r.target_address.clone()).collect();
    assert_eq!(risky, vec![addr('a')]);
    assert_eq!(out.state.depth, 3);
    assert_eq!(out.state.diagnostics.frontier_sizes, vec![1, 2, 1]);
}

#[test]
fn expand_levels_restricts_growth() {
    let (p, chain, backend) = (parts(), star(), ByAddress::star());
    let cfg = TracerConfig {
        expand_levels: [SuspicionLevel::Low].into_iter().collect(),
        ..Default::default()
    };
    let out = trace(&[addr('5')], &cfg, &ports(&p, &chain, &backend), &opts()).unwrap();
    assert_eq!(out.state.l_all.len(), 1, "the seed is rated No Suspicion, so nothing expands");
}

#[test]
fn seed_without_outflow_stops_after_one_hop() {
    let (p, chain, backend) = (parts(), star(), ByAddress::star());
    let out = trace(&[addr('c')], &TracerConfig::default(), &ports(&p, &chain, &backend), &opts()).unwrap();
    assert_eq!(out.state.l_all.len(), 1);
    assert_eq!(out.state.depth, 1);
}

#[test]
fn zero_depth_and_no_seeds_are_rejected() {
    let (p, chain, backend) = (parts(), star(), ByAddress::star());
    let cfg = TracerConfig {
        max_depth: 0,
        ..Default::default()
    };
    let ports = ports(&p, &chain, &backend);
    assert!(matches!(trace(&[addr('5')], &cfg, &ports, &opts()), Err(TraceError::Config(_))));
    assert!(matches!(trace(&[], &TracerConfig::default(), &ports, &opts()), Err(TraceError::NoSeeds)));
}

struct Flaky {
    inner: FixtureChainClient,
    broken: Address,
}

impl ChainClient for Flaky {
    fn capabilities(&self) -> Capabilities {
        self.inner.capabilities()
    }

    fn fetch_account_graph(&self, address: &Address) -> Result<AccountTransactions, ChainError> {
        if address == &self.broken {
            return Err(ChainError::ChainUnavailable {
                chain: address.chain().clone(),
                reason: "stub outage".into(),
            });
        }
        self.inner.fetch_account_graph(address)
    }
}

#[test]
fn failures_skip_or_abort() {
    let p = parts();
    let backend = ByAddress::star();
    let chain = Flaky {
        inner: star(),
        broken: addr('a'),
    };
    let out = trace(&[addr('5')], &TracerConfig::default(), &ports(&p, &chain, &backend), &opts()).unwrap();
    let seen: Vec<_> = out.state.l_all.iter().map(|r| r.target_address.clone()).collect();
    assert_eq!(seen, vec![addr('5'), addr('b')]);
    assert_eq!(out.state.diagnostics.failures.len(), 1);
    assert_eq!(out.state.diagnostics.failures[0].stage, "fetch");

    let strict = TraceOptions { strict: true, ..opts() };
    let err = trace(&[addr('5')], &TracerConfig::default(), &ports(&p, &chain, &backend), &strict).unwrap_err();
    assert!(matches!(err, TraceError::Chain { .. }));
}

#[test]
fn stop_and_resume_matches_straight_run() {
    let (p, chain, backend) = (parts(), star(), ByAddress::star());
    let ports = ports(&p, &chain, &backend);
    let cfg = TracerConfig::default();
    let straight = trace(&[addr('5')], &cfg, &ports, &opts()).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let first = TraceOptions {
        checkpoint_dir: Some(dir.path().to_path_buf()),
        stop_after_depth: Some(1),
        ..opts()
    };
    let partial = trace(&[addr('5')], &cfg, &ports, &first).unwrap();
    assert!(!partial.finished);
    assert!(checkpoint_path(dir.path(), 1).exists());
    let again = TraceOptions {
        checkpoint_dir: Some(dir.path().to_path_buf()),
        ..opts()
    };
    let resumed = resume(dir.path(), &[addr('5')], &cfg, &ports, &again).unwrap();
    assert!(resumed.finished);
    assert_eq!(resumed.state, straight.state);

    let other = TracerConfig { k: 7, ..cfg };
    assert!(matches!(
        resume(dir.path(), &[addr('5')], &other, &ports, &again),
        Err(TraceError::Checkpoint { .. })
    ));
}

#[test]
fn cancellation_returns_between_hops() {
    let (p, chain, backend) = (parts(), star(), ByAddress::star());
    let flag = Arc::new(AtomicBool::new(true));
    let o = TraceOptions {
        cancel: Some(flag),
        ..opts()
    };
    let out = trace(&[addr('5')], &TracerConfig::default(), &ports(&p, &chain, &backend), &o).unwrap();
    assert!(!out.finished);
    assert!(out.state.l_all.is_empty());
}

#[test]
fn outputs_round_trip() {
    let (p, chain, backend) = (parts(), star(), ByAddress::star());
    let out = trace(&[addr('5')], &TracerConfig::default(), &ports(&p, &chain, &backend), &opts()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_outputs(dir.path(), &out.state).unwrap();
    assert_eq!(read_labels(&dir.path().join("labels.jsonl")).unwrap(), out.state.l_all);
    assert_eq!(read_labels(&dir.path().join("risky.jsonl")).unwrap(), out.state.r_final);
    let h = level_histogram(&out.state.l_all);
    assert_eq!(h[&SuspicionLevel::High], 1);
    assert_eq!(h[&SuspicionLevel::NoSuspicion], 2);
}
