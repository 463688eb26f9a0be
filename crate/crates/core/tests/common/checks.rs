//! End-to-end checks shared by the focused tests and the acceptance run.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use risktagger::chain_data::{load_fixture, ChainClient};
use risktagger::explainer::{build_explainer_prompt, formatted_analysis as report_analysis, ExplainInput};
use risktagger::extractor::CaseClues;
use risktagger::model::{RiskDimension, SuspicionLevel};
use risktagger::pipeline::{
    cmd_extract, cmd_run, cmd_trace, AdapterMode, LiveSettings, RunConfig, Runtime, TraceRequest, CLUES_FILE,
};
use risktagger::prompts::PromptRegistry;
use risktagger::reasoner::{build_cot_prompt, build_reflection_prompt, formatted_analysis, known_labels, Blacklist, Verdict};
use risktagger::replay::{etherscan_responder, ReplayServer};
use risktagger::translator::{build_subgraph, to_reasoner_payload, ScoreWeights, TokenDecimals};

use super::{attacker, fixture_client, fixtures, FIXTURE_NOW};

pub fn run_config(out: &Path) -> RunConfig {
    RunConfig {
        fixture_dir: Some(fixtures().join("chains")),
        bridges: Some(fixtures().join("bridges.csv")),
        blacklist: Some(fixtures().join("blacklist.csv")),
        out_dir: out.to_path_buf(),
        now: Some(FIXTURE_NOW),
        controls: 50,
        ..Default::default()
    }
}

pub fn doc() -> PathBuf {
    fixtures().join("bybit_incident.txt")
}

/// Relative path → bytes for every file under `dir`.
pub fn tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.insert(rel, fs::read(&p).unwrap());
            }
        }
    }
    out
}

pub fn run_into(dir: &Path) -> Result<(), String> {
    let cfg = run_config(dir);
    let rt = Runtime::build(&cfg).map_err(|e| e.to_string())?;
    cmd_run(&doc(), &cfg, &rt, &TraceRequest::default()).map_err(|e| e.to_string())?;
    Ok(())
}

fn first_difference(a: &BTreeMap<String, Vec<u8>>, b: &BTreeMap<String, Vec<u8>>) -> String {
    let keys: std::collections::BTreeSet<&String> = a.keys().chain(b.keys()).collect();
    keys.into_iter()
        .find(|k| a.get(*k) != b.get(*k))
        .cloned()
        .unwrap_or_default()
}

/// Two full fixture runs into separate directories, plus a re-run into the
/// first, all produce the same bytes. Returns the number of artifacts.
pub fn determinism() -> Result<usize, String> {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_into(a.path())?;
    run_into(b.path())?;
    let first = tree(a.path());
    for name in ["case_clues.json", "labels.jsonl", "risky.jsonl", "diagnostics.json", "report.md", "coverage.json", "controls.json", "run.json"] {
        if !first.contains_key(name) {
            return Err(format!("missing artifact {name}"));
        }
    }
    let second = tree(b.path());
    if first != second {
        return Err(format!("runs differ at {}", first_difference(&first, &second)));
    }
    run_into(a.path())?;
    let again = tree(a.path());
    if first != again {
        return Err(format!("re-run differs at {}", first_difference(&first, &again)));
    }
    Ok(first.len())
}

/// A trace stopped after `stop` hops and resumed ends with the same state and
/// output files as an uninterrupted one. Returns the final depth.
pub fn resume_matches(stop: u32) -> Result<u32, String> {
    let (straight, split) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let trace = |dir: &Path, req: TraceRequest| {
        let cfg = run_config(dir);
        let rt = Runtime::build(&cfg).map_err(|e| e.to_string())?;
        if !dir.join(CLUES_FILE).exists() {
            cmd_extract(&doc(), &rt, dir).map_err(|e| e.to_string())?;
        }
        cmd_trace(&dir.join(CLUES_FILE), &cfg, &rt, dir, &req).map_err(|e| e.to_string())
    };
    let full = trace(straight.path(), TraceRequest::default())?;
    if !full.finished || full.state.depth <= stop {
        return Err(format!("straight run too shallow ({} hops)", full.state.depth));
    }
    let partial = trace(
        split.path(),
        TraceRequest {
            stop_after_depth: Some(stop),
            ..Default::default()
        },
    )?;
    if partial.finished || partial.state.depth != stop {
        return Err(format!("expected a stop at hop {stop}, got depth {}", partial.state.depth));
    }
    let resumed = trace(
        split.path(),
        TraceRequest {
            resume: true,
            ..Default::default()
        },
    )?;
    if resumed.state != full.state {
        return Err("resumed state differs from the straight run".into());
    }
    let (a, b) = (tree(straight.path()), tree(split.path()));
    if a != b {
        return Err(format!("outputs differ at {}", first_difference(&a, &b)));
    }
    Ok(full.state.depth)
}

fn live_config(out: &Path, server: &ReplayServer, cache: &Path) -> RunConfig {
    RunConfig {
        adapter: AdapterMode::Live,
        fixture_dir: None,
        bridges: None,
        cache_dir: Some(cache.to_path_buf()),
        live: LiveSettings {
            base_url: server.url("/api"),
            requests_per_second: 1e6,
            ..Default::default()
        },
        ..run_config(out)
    }
}

/// Two live-mode traces against a stub explorer sharing one cache directory.
/// Returns (requests of the first run, requests of the second run).
pub fn cache_soundness() -> Result<(u64, u64), String> {
    let store = load_fixture(fixtures().join("chains/ethereum.csv")).map_err(|e| e.to_string())?;
    let server = ReplayServer::start(etherscan_responder(store));
    let (work, cache) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let setup = run_config(work.path());
    cmd_extract(&doc(), &Runtime::build(&setup).map_err(|e| e.to_string())?, work.path()).map_err(|e| e.to_string())?;
    let clues = work.path().join(CLUES_FILE);

    let live_trace = |name: &str| {
        let out = work.path().join(name);
        let cfg = live_config(&out, &server, cache.path());
        let rt = Runtime::build(&cfg).map_err(|e| e.to_string())?;
        let t = cmd_trace(&clues, &cfg, &rt, &out, &TraceRequest::default()).map_err(|e| e.to_string())?;
        Ok::<_, String>((t, rt.live.as_ref().map_or(0, |c| c.request_count())))
    };
    let (first, first_requests) = live_trace("first")?;
    let upstream = server.request_count();
    if first_requests == 0 || first_requests != upstream {
        return Err(format!("first run: client counted {first_requests}, stub saw {upstream}"));
    }
    let (second, second_requests) = live_trace("second")?;
    if server.request_count() != upstream {
        return Err(format!("stub saw {} new request(s)", server.request_count() - upstream));
    }
    if first.state.l_all != second.state.l_all {
        return Err("cached run labels differ".into());
    }

    let fixture_out = work.path().join("fixture");
    let fcfg = RunConfig {
        bridges: None,
        ..run_config(&fixture_out)
    };
    let rt = Runtime::build(&fcfg).map_err(|e| e.to_string())?;
    let direct = cmd_trace(&clues, &fcfg, &rt, &fixture_out, &TraceRequest::default()).map_err(|e| e.to_string())?;
    if direct.state.l_all != first.state.l_all {
        return Err("live replay labels differ from direct fixture labels".into());
    }
    Ok((first_requests, second_requests))
}

pub fn golden(name: &str) -> String {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(format!("{name}.txt"));
    fs::read_to_string(path).unwrap()
}

fn blank(rendered: &str, values: &[&str]) -> String {
    values.iter().fold(rendered.to_owned(), |s, v| {
        assert!(s.contains(v), "bound value not found in the rendered prompt");
        s.replacen(v, "", 1)
    })
}

/// (name, rendered prompt with bound values removed, golden transcription).
pub fn prompt_renders() -> Vec<(&'static str, String, String)> {
    let reg = PromptRegistry::builtin();
    let target = attacker();

    let txs = fixture_client().fetch_account_graph(&target).unwrap().txs;
    let sub = build_subgraph(&target, &txs, &[], 100, FIXTURE_NOW, ScoreWeights::default());
    let payload = to_reasoner_payload(&sub, &TokenDecimals::default());
    let mut blacklist = Blacklist::default();
    let t = &sub.retained_txs[0];
    let counterparty = if t.from == target { &t.to } else { &t.from };
    blacklist.insert(counterparty, "listed");
    let known = known_labels(&sub, &blacklist);
    assert!(!known.is_empty());
    let cot = build_cot_prompt(&reg, &payload, &target, &known).unwrap();
    let cot = blank(&cot, &[&formatted_analysis(&payload, &known), target.hex()]);

    let verdict = Verdict {
        suspicion_level: SuspicionLevel::Medium,
        a_transaction_patterns: RiskDimension::new("No anomaly", ""),
        b_fund_flows: RiskDimension::new("Suspicious fund flow", "12 senders then 3 receivers"),
        c_associated_addresses: RiskDimension::new("No anomaly", ""),
        d_temporal_behavioral_signs: RiskDimension::new("No anomaly", ""),
        justification: "aggregation then dispersion".into(),
        gaps: String::new(),
    };
    let reflection = build_reflection_prompt(&reg, &target, &verdict).unwrap();
    let reflection = blank(&reflection, &[&verdict.to_json(), target.hex()]);

    let clues: CaseClues = serde_json::from_str(
        r#"{"chain":"ethereum","attack_vector":"wallet takeover","affected_platform":"Example",
            "contract_address":[],"attacker_addresses":[],"victim_addresses":[],"stolen_usd":5,
            "stolen_token":{},"laundering_methods":null,"laundering_path":null,"evidence_snippets":null}"#,
    )
    .unwrap();
    let input = ExplainInput {
        clues: &clues,
        l_all: &[],
        r_final: &[],
        normal_controls: None,
    };
    let explainer = build_explainer_prompt(&reg, &input).unwrap();
    let explainer = blank(&explainer, &[&report_analysis(&input)]);

    vec![
        ("cot", cot, format!("{}\n{}", golden("cot_part1"), golden("cot_part2"))),
        ("reflection", reflection, golden("reflection")),
        ("explainer", explainer, format!("{}\n{}", golden("explainer_part1"), golden("explainer_part2"))),
    ]
}
