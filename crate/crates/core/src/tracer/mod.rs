//! Hop-by-hop laundering trace: fetch, cross-chain expand, translate,
//! infer, collect out-neighbors, filter, repeat until the frontier empties
//! or the depth limit is reached.

mod checkpoint;
mod filter;

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use checkpoint::{checkpoint_path, latest_checkpoint, write_checkpoint};
pub use filter::{filter_frontier, InboundEdge, PruneCounts};

use crate::backend::BackendPort;
use crate::chain_data::{ChainClient, ChainError, CrossChainMatcher};
use crate::model::{Address, ModelError, RiskAssessment, SuspicionLevel, TracerConfig};
use crate::prompts::PromptRegistry;
use crate::reasoner::{infer_risk, Blacklist, ReasonerConfig, ReasonerError};
use crate::translator::{build_subgraph, AccountSubgraph, ScoreWeights};

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("no seed addresses")]
    NoSeeds,
    #[error(transparent)]
    Config(#[from] ModelError),
    #[error("fetch failed for {address}: {source}")]
    Chain {
        address: String,
        #[source]
        source: ChainError,
    },
    #[error("inference failed for {address}: {source}")]
    Reasoner {
        address: String,
        #[source]
        source: ReasonerError,
    },
    #[error("checkpoint {path}: {detail}")]
    Checkpoint { path: PathBuf, detail: String },
}

/// An account skipped because a port failed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccountFailure {
    pub address: Address,
    pub hop_depth: u32,
    pub stage: String,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub fetched: u64,
    pub truncated_histories: u64,
    pub cross_chain_pairs: u64,
    pub unmatched_deposits: u64,
    #[serde(flatten)]
    pub pruned: PruneCounts,
    /// Frontier size at the start of each hop.
    pub frontier_sizes: Vec<usize>,
    pub failures: Vec<AccountFailure>,
}

/// Everything needed to continue a trace; persisted after every hop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TracerState {
    pub depth: u32,
    pub c_current: Vec<Address>,
    pub visited: BTreeSet<Address>,
    pub r_final: Vec<RiskAssessment>,
    pub l_all: Vec<RiskAssessment>,
    pub diagnostics: Diagnostics,
    pub config: TracerConfig,
    pub now: u64,
}

impl TracerState {
    pub fn new(seeds: &[Address], cfg: &TracerConfig, now: u64) -> Self {
        let mut c_current = Vec::new();
        for s in seeds {
            if !c_current.contains(s) {
                c_current.push(s.clone());
            }
        }
        Self {
            depth: 0,
            c_current,
            visited: BTreeSet::new(),
            r_final: Vec::new(),
            l_all: Vec::new(),
            diagnostics: Diagnostics::default(),
            config: cfg.clone(),
            now,
        }
    }

    pub fn is_done(&self) -> bool {
        self.c_current.is_empty() || self.depth >= self.config.max_depth
    }
}

/// The ports a trace drives. All are shared across worker threads.
#[derive(Clone, Copy)]
pub struct TracePorts<'a> {
    pub chain: &'a dyn ChainClient,
    pub cross_chain: &'a dyn CrossChainMatcher,
    pub backend: &'a dyn BackendPort,
    pub prompts: &'a PromptRegistry,
    pub blacklist: &'a Blacklist,
    pub reasoner: &'a ReasonerConfig,
}

#[derive(Debug, Clone, Default)]
pub struct TraceOptions {
    /// Reference time for recency scoring; fixed for reproducible runs.
    pub now: u64,
    /// Abort on the first port failure instead of skipping the account.
    pub strict: bool,
    pub checkpoint_dir: Option<PathBuf>,
    /// Return after this many hops have completed and been checkpointed.
    pub stop_after_depth: Option<u32>,
    /// Checked between hops; when set the trace returns early.
    pub cancel: Option<Arc<AtomicBool>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceOutcome {
    pub state: TracerState,
    /// False when stopped early by `stop_after_depth` or cancellation.
    pub finished: bool,
}

struct Analyzed {
    assessment: RiskAssessment,
    edges: Vec<InboundEdge>,
    truncated: bool,
    pairs: u64,
    unmatched: u64,
}

enum Failed {
    Chain(ChainError),
    Reasoner(ReasonerError),
}

fn outgoing_edges(sub: &AccountSubgraph, level: SuspicionLevel) -> Vec<InboundEdge> {
    let c = &sub.center;
    let mut edges: Vec<InboundEdge> = sub
        .retained_txs
        .iter()
        .filter(|t| t.from.hex() == c.hex() && t.to.hex() != c.hex() && !t.is_error)
        .map(|t| InboundEdge {
            from: c.clone(),
            to: t.to.clone(),
            value: t.value.clone(),
            time_stamp: t.time_stamp,
            sender_level: level,
        })
        .collect();
    for p in &sub.cross_chain {
        let d = p.destination();
        if d != c {
            edges.push(InboundEdge {
                from: c.clone(),
                to: d.clone(),
                value: p.amount_dst.clone(),
                time_stamp: p.dst_tx.time_stamp,
                sender_level: level,
            });
        }
    }
    edges
}

fn analyze(
    address: &Address,
    depth: u32,
    cfg: &TracerConfig,
    ports: &TracePorts<'_>,
    now: u64,
) -> Result<Analyzed, Failed> {
    let fetched = ports.chain.fetch_account_graph(address).map_err(Failed::Chain)?;
    let expansion = ports.cross_chain.expand(address, &fetched.txs);
    let mut sub = build_subgraph(address, &fetched.txs, &expansion.pairs, cfg.k, now, ScoreWeights::default());
    sub.truncated |= fetched.truncated;
    let mut assessment = infer_risk(&sub, ports.blacklist, ports.backend, ports.prompts, ports.reasoner)
        .map_err(Failed::Reasoner)?;
    assessment.hop_depth = depth;
    Ok(Analyzed {
        edges: outgoing_edges(&sub, assessment.suspicion_level),
        assessment,
        truncated: fetched.truncated,
        pairs: expansion.pairs.len() as u64,
        unmatched: expansion.unmatched.len() as u64,
    })
}

/// Runs one hop over `state.c_current` and advances `state.depth`.
pub fn step(state: &mut TracerState, ports: &TracePorts<'_>, strict: bool) -> Result<(), TraceError> {
    let cfg = state.config.clone();
    let depth = state.depth;
    let frontier = std::mem::take(&mut state.c_current);
    tracing::info!(depth, frontier = frontier.len(), "hop");
    state.diagnostics.frontier_sizes.push(frontier.len());

    let results: Vec<(Address, Result<Analyzed, Failed>)> = frontier
        .par_iter()
        .map(|a| (a.clone(), analyze(a, depth, &cfg, ports, state.now)))
        .collect();

    let mut done = Vec::new();
    for (address, r) in results {
        match r {
            Ok(a) => done.push(a),
            Err(f) => {
                let (stage, error) = match &f {
                    Failed::Chain(e) => ("fetch", e.to_string()),
                    Failed::Reasoner(e) => ("infer", e.to_string()),
                };
                if strict {
                    let address = address.hex().to_owned();
                    return Err(match f {
                        Failed::Chain(source) => TraceError::Chain { address, source },
                        Failed::Reasoner(source) => TraceError::Reasoner { address, source },
                    });
                }
                tracing::warn!(address = address.hex(), stage, %error, "account skipped");
                state.diagnostics.failures.push(AccountFailure {
                    address,
                    hop_depth: depth,
                    stage: stage.to_owned(),
                    error,
                });
            }
        }
    }
    state.visited.extend(frontier);
    done.sort_by(|x, y| x.assessment.target_address.cmp(&y.assessment.target_address));

    let mut c_next = Vec::new();
    let mut edges = Vec::new();
    for a in done {
        let d = &mut state.diagnostics;
        d.fetched += 1;
        d.truncated_histories += u64::from(a.truncated);
        d.cross_chain_pairs += a.pairs;
        d.unmatched_deposits += a.unmatched;
        if cfg.expand_levels.contains(&a.assessment.suspicion_level) {
            c_next.extend(a.assessment.out_neighbors.iter().cloned());
        }
        edges.extend(a.edges);
        if a.assessment.suspicion_level == SuspicionLevel::High {
            state.r_final.push(a.assessment.clone());
        }
        state.l_all.push(a.assessment);
    }
    state.c_current = filter_frontier(
        &c_next,
        &state.visited,
        &edges,
        &cfg,
        state.now,
        &mut state.diagnostics.pruned,
    );
    state.depth += 1;
    Ok(())
}

/// Continues `state` until it is done, checkpointing after every hop.
pub fn run(mut state: TracerState, ports: &TracePorts<'_>, opts: &TraceOptions) -> Result<TraceOutcome, TraceError> {
    state.config.validate()?;
    while !state.is_done() {
        if opts.cancel.as_ref().is_some_and(|c| c.load(Ordering::SeqCst)) {
            tracing::warn!(depth = state.depth, "trace interrupted");
            return Ok(TraceOutcome { state, finished: false });
        }
        step(&mut state, ports, opts.strict)?;
        if let Some(dir) = &opts.checkpoint_dir {
            write_checkpoint(dir, &state)?;
        }
        if opts.stop_after_depth == Some(state.depth) && !state.is_done() {
            return Ok(TraceOutcome { state, finished: false });
        }
    }
    Ok(TraceOutcome { state, finished: true })
}

pub fn trace(
    seeds: &[Address],
    cfg: &TracerConfig,
    ports: &TracePorts<'_>,
    opts: &TraceOptions,
) -> Result<TraceOutcome, TraceError> {
    if seeds.is_empty() {
        return Err(TraceError::NoSeeds);
    }
    cfg.validate()?;
    run(TracerState::new(seeds, cfg, opts.now), ports, opts)
}

/// Picks up from the newest checkpoint in `dir`, or starts fresh when there is none.
/// A checkpoint written under a different configuration is rejected.
pub fn resume(
    dir: &Path,
    seeds: &[Address],
    cfg: &TracerConfig,
    ports: &TracePorts<'_>,
    opts: &TraceOptions,
) -> Result<TraceOutcome, TraceError> {
    match latest_checkpoint(dir)? {
        None => trace(seeds, cfg, ports, opts),
        Some((path, state)) => {
            if &state.config != cfg || state.now != opts.now {
                return Err(TraceError::Checkpoint {
                    path,
                    detail: "written with a different tracer configuration".into(),
                });
            }
            tracing::info!(path = %path.display(), depth = state.depth, "resuming");
            run(state, ports, opts)
        }
    }
}

/// Level counts over `L_all`, highest first.
pub fn level_histogram(l_all: &[RiskAssessment]) -> BTreeMap<SuspicionLevel, usize> {
    let mut h: BTreeMap<SuspicionLevel, usize> = SuspicionLevel::ALL.iter().map(|l| (*l, 0)).collect();
    for r in l_all {
        *h.entry(r.suspicion_level).or_default() += 1;
    }
    h
}

fn jsonl(rows: &[RiskAssessment]) -> String {
    rows.iter()
        .map(|r| serde_json::to_string(r).expect("assessment serialises") + "\n")
        .collect()
}

/// Writes `labels.jsonl`, `risky.jsonl` and `diagnostics.json` into `dir`.
pub fn write_outputs(dir: &Path, state: &TracerState) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("labels.jsonl"), jsonl(&state.l_all))?;
    std::fs::write(dir.join("risky.jsonl"), jsonl(&state.r_final))?;
    let diag = serde_json::to_string_pretty(&state.diagnostics).expect("diagnostics serialise");
    std::fs::write(dir.join("diagnostics.json"), diag + "\n")
}

pub fn read_labels(path: &Path) -> std::io::Result<Vec<RiskAssessment>> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| {
                std::io::Error::new(std::io::ErrorKind::InvalidData, format!("{}:{}: {e}", path.display(), i + 1))
            })
        })
        .collect()
}

#[cfg(test)]
mod tests;
