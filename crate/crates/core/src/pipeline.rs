//! Run configuration and the extract → trace → explain commands.
//!
//! Every command writes into one output directory. Commands return
//! [`PipelineError`], whose [`exit_code`](PipelineError::exit_code) follows
//! the scripting contract: 0 success, 1 infrastructure failure, 2 domain
//! incompleteness.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::atomic::AtomicBool;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::backend::{BackendError, BackendPort, ChatCompletionsBackend, LLM_ENDPOINT_ENV, LLM_KEY_ENV};
use crate::chain_data::{
    load_fixture_dir, BridgeMatcher, BridgeRegistry, ChainClient, ChainError, CrossChainMatcher, EtherscanClient,
    FetchCache, FixtureChainClient, LiveChainConfig, MatchTolerance, NoCrossChain, RetryPolicy,
};
use crate::explainer::{coverage, generate_report, CoverageReport, ExplainError, ExplainInput, ExplainOptions, ReportChecklist};
use crate::extractor::{extract_document, CaseClues, ClueField, ExtractError, ExtractOptions, Extraction, PatternBackend};
use crate::model::{Address, ChainId, RiskAssessment, SuspicionLevel, TracerConfig};
use crate::prompts::{sha256_hex, PromptError, PromptRegistry};
use crate::reasoner::{Blacklist, ReasonerConfig, ReasonerError, RuleBackend, RuleThresholds};
use crate::tracer::{self, latest_checkpoint, read_labels, write_outputs, TraceError, TraceOptions, TraceOutcome, TracePorts};

pub const CACHE_DIR_ENV: &str = "RISKTAGGER_CACHE_DIR";

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_INCOMPLETE: i32 = 2;
/// Conventional status for a run stopped by Ctrl-C.
pub const EXIT_INTERRUPTED: i32 = 130;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {detail}")]
    Json { path: PathBuf, detail: String },
    #[error(transparent)]
    Extract(#[from] ExtractError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Explain(#[from] ExplainError),
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Reasoner(#[from] ReasonerError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("mandatory clue fields incomplete:\n{listing}")]
    Incomplete { missing: Vec<ClueField>, listing: String },
    #[error("no seeds: the clues list no attacker addresses")]
    NoSeeds,
    #[error("interrupted after hop {depth}; rerun with --resume to continue")]
    Interrupted { depth: u32 },
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Incomplete { .. } | Self::NoSeeds | Self::Trace(TraceError::NoSeeds) => EXIT_INCOMPLETE,
            Self::Interrupted { .. } => EXIT_INTERRUPTED,
            _ => EXIT_FAILURE,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdapterMode {
    #[default]
    Fixture,
    Live,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendMode {
    #[default]
    Rules,
    Llm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmSettings {
    pub endpoint: Option<String>,
    pub model: String,
    pub temperature: f64,
}

impl Default for LlmSettings {
    fn default() -> Self {
        Self {
            endpoint: None,
            model: "default".into(),
            temperature: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LiveSettings {
    /// Etherscan-family endpoint; multichain endpoints take `chainid`.
    pub base_url: String,
    /// Chain name → `chainid` parameter.
    pub chain_ids: BTreeMap<String, u64>,
    pub requests_per_second: f64,
    pub max_in_flight: usize,
}

impl Default for LiveSettings {
    fn default() -> Self {
        let ids = [("ethereum", 1), ("bsc", 56), ("polygon", 137), ("arbitrum", 42161), ("optimism", 10), ("base", 8453)];
        Self {
            base_url: "https://api.etherscan.io/v2/api".into(),
            chain_ids: ids.into_iter().map(|(k, v)| (k.to_owned(), v)).collect(),
            requests_per_second: 5.0,
            max_in_flight: 4,
        }
    }
}

impl std::str::FromStr for AdapterMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "fixture" => Ok(Self::Fixture),
            "live" => Ok(Self::Live),
            _ => Err(format!("unknown adapter `{s}` (fixture or live)")),
        }
    }
}

impl std::str::FromStr for BackendMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "rules" => Ok(Self::Rules),
            "llm" => Ok(Self::Llm),
            _ => Err(format!("unknown backend `{s}` (rules or llm)")),
        }
    }
}

/// One JSON document describing a run. Precedence when resolving:
/// environment variables over command-line flags over the file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub chain: ChainId,
    pub tracer: TracerConfig,
    pub reasoner: ReasonerConfig,
    pub rules: RuleThresholds,
    pub adapter: AdapterMode,
    /// Directory of `<chain>.csv` transaction fixtures.
    pub fixture_dir: Option<PathBuf>,
    pub bridges: Option<PathBuf>,
    pub blacklist: Option<PathBuf>,
    pub cache_dir: Option<PathBuf>,
    pub prompts_dir: Option<PathBuf>,
    /// Template name → expected sha256; a mismatch refuses to run.
    pub prompt_pins: BTreeMap<String, String>,
    pub backend: BackendMode,
    pub llm: LlmSettings,
    pub live: LiveSettings,
    pub out_dir: PathBuf,
    /// Seed for control sampling.
    pub seed: u64,
    /// Reference unix time for recency scoring; the clock is read when unset.
    pub now: Option<u64>,
    pub seed_victims: bool,
    pub strict: bool,
    /// Normal control accounts drawn by `run` (fixture mode only).
    pub controls: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            chain: ChainId::ethereum(),
            tracer: TracerConfig::default(),
            reasoner: ReasonerConfig::default(),
            rules: RuleThresholds::default(),
            adapter: AdapterMode::Fixture,
            fixture_dir: None,
            bridges: None,
            blacklist: None,
            cache_dir: None,
            prompts_dir: None,
            prompt_pins: BTreeMap::new(),
            backend: BackendMode::Rules,
            llm: LlmSettings::default(),
            live: LiveSettings::default(),
            out_dir: PathBuf::from("out"),
            seed: 7,
            now: None,
            seed_victims: false,
            strict: false,
            controls: 100,
        }
    }
}

/// Command-line values that replace their config counterparts when present.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub out_dir: Option<PathBuf>,
    pub adapter: Option<AdapterMode>,
    pub backend: Option<BackendMode>,
    pub fixture_dir: Option<PathBuf>,
    pub bridges: Option<PathBuf>,
    pub blacklist: Option<PathBuf>,
    pub cache_dir: Option<PathBuf>,
    pub llm_endpoint: Option<String>,
    pub max_depth: Option<u32>,
    pub frontier_cap: Option<usize>,
    pub seed: Option<u64>,
    pub now: Option<u64>,
    pub seed_victims: bool,
    pub strict: bool,
}

impl RunConfig {
    /// Reads a config file; relative paths inside it are taken from the file's directory.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let mut cfg: RunConfig = serde_json::from_str(&text).map_err(|e| PipelineError::Json {
            path: path.to_path_buf(),
            detail: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in [
            &mut cfg.fixture_dir,
            &mut cfg.bridges,
            &mut cfg.blacklist,
            &mut cfg.cache_dir,
            &mut cfg.prompts_dir,
        ]
        .into_iter()
        .flatten()
        {
            rebase(p);
        }
        rebase(&mut cfg.out_dir);
        Ok(cfg)
    }

    pub fn apply_overrides(&mut self, o: &Overrides) {
        macro_rules! set {
            ($field:expr, $value:expr) => {
                if let Some(v) = $value.clone() {
                    $field = v;
                }
            };
        }
        set!(self.out_dir, o.out_dir);
        set!(self.adapter, o.adapter);
        set!(self.backend, o.backend);
        set!(self.seed, o.seed);
        set!(self.tracer.max_depth, o.max_depth);
        if o.fixture_dir.is_some() {
            self.fixture_dir = o.fixture_dir.clone();
        }
        if o.bridges.is_some() {
            self.bridges = o.bridges.clone();
        }
        if o.blacklist.is_some() {
            self.blacklist = o.blacklist.clone();
        }
        if o.cache_dir.is_some() {
            self.cache_dir = o.cache_dir.clone();
        }
        if o.llm_endpoint.is_some() {
            self.llm.endpoint = o.llm_endpoint.clone();
        }
        if o.frontier_cap.is_some() {
            self.tracer.frontier_cap = o.frontier_cap;
        }
        if o.now.is_some() {
            self.now = o.now;
        }
        self.seed_victims |= o.seed_victims;
        self.strict |= o.strict;
    }

    /// Applies `RISKTAGGER_LLM_ENDPOINT` and `RISKTAGGER_CACHE_DIR`. API keys
    /// are read only when the adapters are built and never enter the config.
    pub fn apply_env(&mut self, var: impl Fn(&str) -> Option<String>) {
        if let Some(e) = var(LLM_ENDPOINT_ENV).filter(|v| !v.is_empty()) {
            self.llm.endpoint = Some(e);
        }
        if let Some(d) = var(CACHE_DIR_ENV).filter(|v| !v.is_empty()) {
            self.cache_dir = Some(PathBuf::from(d));
        }
    }

    /// File, then flags, then the process environment.
    pub fn resolve(file: Option<&Path>, flags: &Overrides) -> Result<Self, PipelineError> {
        let mut cfg = match file {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        cfg.apply_overrides(flags);
        cfg.apply_env(|k| std::env::var(k).ok());
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: &str| Err(PipelineError::Config(m.to_owned()));
        if self.adapter == AdapterMode::Fixture && self.fixture_dir.is_none() {
            return bad("fixture mode needs fixture_dir");
        }
        if self.backend == BackendMode::Llm && self.llm.endpoint.is_none() {
            return bad("llm mode needs an endpoint (llm.endpoint or RISKTAGGER_LLM_ENDPOINT)");
        }
        self.tracer.validate().map_err(|e| PipelineError::Config(e.to_string()))
    }

    /// Reference time: the configured value, else the system clock.
    pub fn reference_time(&self) -> u64 {
        self.now.unwrap_or_else(|| chrono::Utc::now().timestamp().max(0) as u64)
    }

    /// Stable digest of the configuration with the output directory left out.
    pub fn digest(&self) -> String {
        sha256_hex(&self.manifest_json().to_string())
    }

    fn manifest_json(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("config serialises");
        v.as_object_mut().expect("object").remove("out_dir");
        v
    }
}

/// Adapters and backends built from a [`RunConfig`].
pub struct Runtime {
    pub chain: Arc<dyn ChainClient>,
    pub cross_chain: Box<dyn CrossChainMatcher>,
    pub backend: Arc<dyn BackendPort>,
    pub extract_backend: Arc<dyn BackendPort>,
    /// Backend asked for the narrative report; `None` uses the template.
    pub report_backend: Option<Arc<dyn BackendPort>>,
    pub prompts: PromptRegistry,
    pub blacklist: Blacklist,
    pub reasoner: ReasonerConfig,
    pub fixture: Option<Arc<FixtureChainClient>>,
    pub live: Option<Arc<EtherscanClient>>,
}

impl Runtime {
    pub fn build(cfg: &RunConfig) -> Result<Self, PipelineError> {
        let prompts = match &cfg.prompts_dir {
            Some(dir) => PromptRegistry::load_dir(dir)?,
            None => PromptRegistry::builtin(),
        };
        prompts.verify_pins(&cfg.prompt_pins)?;
        let blacklist = match &cfg.blacklist {
            Some(p) => Blacklist::load(p)?,
            None => Blacklist::default(),
        };
        let registry = cfg.bridges.as_ref().map(BridgeRegistry::load).transpose()?;

        let (chain, fixture, live): (Arc<dyn ChainClient>, _, _) = match cfg.adapter {
            AdapterMode::Fixture => {
                let dir = cfg.fixture_dir.as_ref().ok_or_else(|| PipelineError::Config("fixture_dir".into()))?;
                let f = Arc::new(load_fixture_dir(dir)?);
                (f.clone(), Some(f), None)
            }
            AdapterMode::Live => {
                let mut chains: BTreeSet<ChainId> = BTreeSet::from([cfg.chain.clone()]);
                if let Some(r) = &registry {
                    chains.extend(r.entries().iter().map(|e| e.address.chain().clone()));
                }
                let configs = chains.into_iter().map(|c| {
                    let mut lc = LiveChainConfig::new(c.clone(), cfg.live.base_url.clone());
                    lc.chain_id_param = cfg.live.chain_ids.get(c.as_str()).copied();
                    lc.requests_per_second = cfg.live.requests_per_second;
                    lc
                });
                let cache = cfg.cache_dir.clone().map(FetchCache::new);
                let c = Arc::new(EtherscanClient::new(
                    configs,
                    cache,
                    RetryPolicy::default(),
                    cfg.live.max_in_flight,
                ));
                (c.clone(), None, Some(c))
            }
        };
        let cross_chain: Box<dyn CrossChainMatcher> = match registry {
            Some(r) => Box::new(BridgeMatcher::new(r, chain.clone(), MatchTolerance::default())),
            None => Box::new(NoCrossChain),
        };

        let mut reasoner = cfg.reasoner.clone();
        let (backend, extract_backend, report_backend): (Arc<dyn BackendPort>, Arc<dyn BackendPort>, _) =
            match cfg.backend {
                BackendMode::Rules => (
                    Arc::new(RuleBackend::new(prompts.clone(), cfg.rules.clone(), reasoner.decimals.clone())),
                    Arc::new(PatternBackend),
                    None,
                ),
                BackendMode::Llm => {
                    let endpoint = cfg.llm.endpoint.clone().unwrap_or_default();
                    let key = std::env::var(LLM_KEY_ENV).ok().filter(|k| !k.is_empty());
                    let llm: Arc<dyn BackendPort> =
                        Arc::new(ChatCompletionsBackend::new(endpoint, key, cfg.llm.model.clone()));
                    reasoner.temperature = cfg.llm.temperature;
                    (llm.clone(), llm.clone(), Some(llm))
                }
            };
        Ok(Self {
            chain,
            cross_chain,
            backend,
            extract_backend,
            report_backend,
            prompts,
            blacklist,
            reasoner,
            fixture,
            live,
        })
    }

    pub fn ports(&self) -> TracePorts<'_> {
        TracePorts {
            chain: self.chain.as_ref(),
            cross_chain: self.cross_chain.as_ref(),
            backend: self.backend.as_ref(),
            prompts: &self.prompts,
            blacklist: &self.blacklist,
            reasoner: &self.reasoner,
        }
    }
}

/// The serde name of a unit enum variant.
fn snake(v: &impl Serialize) -> String {
    serde_json::to_value(v)
        .ok()
        .and_then(|j| j.as_str().map(str::to_owned))
        .unwrap_or_default()
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), PipelineError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let text = serde_json::to_string_pretty(value).expect("serialisable") + "\n";
    std::fs::write(path, text).map_err(io_err(path))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| PipelineError::Json {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })
}

pub const CLUES_FILE: &str = "case_clues.json";
pub const AUDIT_FILE: &str = "case_clues.audit.json";
pub const CONTROLS_FILE: &str = "controls.json";
pub const REPORT_FILE: &str = "report.md";
pub const COVERAGE_FILE: &str = "coverage.json";
pub const MANIFEST_FILE: &str = "run.json";

/// Extracts clues from `doc` into `case_clues.json` plus a provenance sidecar.
/// Returns [`PipelineError::Incomplete`] (after writing both files) when a
/// mandatory field has no value.
pub fn cmd_extract(doc: &Path, rt: &Runtime, out_dir: &Path) -> Result<Extraction, PipelineError> {
    let text = std::fs::read_to_string(doc).map_err(io_err(doc))?;
    let extraction = extract_document(&text, rt.extract_backend.as_ref(), &rt.prompts, &ExtractOptions::default())?;
    write_json(&out_dir.join(CLUES_FILE), &extraction.clues)?;
    let audit = serde_json::json!({ "status": extraction.status, "provenance": extraction.audit });
    write_json(&out_dir.join(AUDIT_FILE), &audit)?;
    if !extraction.is_complete() {
        let listing = extraction
            .status
            .iter()
            .filter(|(f, _)| f.is_mandatory())
            .map(|(f, s)| format!("  {}: {}", snake(f), snake(s)))
            .collect::<Vec<_>>()
            .join("\n");
        return Err(PipelineError::Incomplete {
            missing: extraction.missing(),
            listing,
        });
    }
    Ok(extraction)
}

#[derive(Debug, Clone, Default)]
pub struct TraceRequest {
    pub resume: bool,
    pub stop_after_depth: Option<u32>,
    pub cancel: Option<Arc<AtomicBool>>,
}

pub fn seeds_from(clues: &CaseClues, with_victims: bool) -> Vec<Address> {
    let mut seeds = clues.attacker_addresses.clone();
    if with_victims {
        seeds.extend(clues.victim_addresses.iter().cloned());
    }
    seeds
}

/// Traces from the clue seeds and writes labels, risky accounts,
/// diagnostics and per-hop checkpoints under `out_dir`.
pub fn cmd_trace(
    clues_path: &Path,
    cfg: &RunConfig,
    rt: &Runtime,
    out_dir: &Path,
    req: &TraceRequest,
) -> Result<TraceOutcome, PipelineError> {
    let clues: CaseClues = read_json(clues_path)?;
    let seeds = seeds_from(&clues, cfg.seed_victims);
    if seeds.is_empty() {
        return Err(PipelineError::NoSeeds);
    }
    let ckpt = out_dir.join("checkpoints");
    let mut now = cfg.now;
    if req.resume && now.is_none() {
        now = latest_checkpoint(&ckpt)?.map(|(_, s)| s.now);
    }
    let opts = TraceOptions {
        now: now.unwrap_or_else(|| cfg.reference_time()),
        strict: cfg.strict,
        checkpoint_dir: Some(ckpt.clone()),
        stop_after_depth: req.stop_after_depth,
        cancel: req.cancel.clone(),
    };
    let outcome = if req.resume {
        tracer::resume(&ckpt, &seeds, &cfg.tracer, &rt.ports(), &opts)?
    } else {
        tracer::trace(&seeds, &cfg.tracer, &rt.ports(), &opts)?
    };
    write_outputs(out_dir, &outcome.state).map_err(io_err(out_dir))?;
    let cancelled = req.cancel.as_ref().is_some_and(|c| c.load(std::sync::atomic::Ordering::SeqCst));
    if !outcome.finished && cancelled {
        return Err(PipelineError::Interrupted {
            depth: outcome.state.depth,
        });
    }
    Ok(outcome)
}

/// Draws `n` addresses uniformly without replacement from fixture accounts
/// that the trace never reached. The result is sorted.
pub fn sample_controls(
    fixture: &FixtureChainClient,
    l_all: &[RiskAssessment],
    n: usize,
    seed: u64,
) -> Vec<Address> {
    let reached: BTreeSet<&Address> = l_all.iter().map(|r| &r.target_address).collect();
    let pool: Vec<Address> = fixture
        .stores()
        .flat_map(|s| s.addresses())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .filter(|a| !reached.contains(a))
        .collect();
    if n > pool.len() {
        tracing::warn!(requested = n, available = pool.len(), "fewer unreached accounts than requested");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked: Vec<Address> = pool.choose_multiple(&mut rng, n).cloned().collect();
    picked.sort();
    picked
}

pub fn cmd_sample_controls(
    rt: &Runtime,
    labels: Option<&Path>,
    n: usize,
    seed: u64,
    out: &Path,
) -> Result<Vec<Address>, PipelineError> {
    let fixture = rt
        .fixture
        .as_ref()
        .ok_or_else(|| PipelineError::Config("control sampling needs fixture mode".into()))?;
    let l_all = match labels {
        Some(p) => read_labels(p).map_err(io_err(p))?,
        None => Vec::new(),
    };
    let controls = sample_controls(fixture, &l_all, n, seed);
    write_json(out, &controls)?;
    Ok(controls)
}

/// Coverage of `report` against the checklist built from `clues`, with the renderer noted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageFile {
    pub renderer: String,
    pub fallback_reason: Option<String>,
    #[serde(flatten)]
    pub coverage: CoverageReport,
}

/// Writes `report.md` and `coverage.json`. `R_final` is recovered from the
/// labels as the High accounts, in label order.
pub fn cmd_explain(
    clues_path: &Path,
    labels_path: &Path,
    controls: Option<&Path>,
    rt: &Runtime,
    out_dir: &Path,
) -> Result<CoverageFile, PipelineError> {
    let clues: CaseClues = read_json(clues_path)?;
    let l_all = read_labels(labels_path).map_err(io_err(labels_path))?;
    let r_final: Vec<RiskAssessment> =
        l_all.iter().filter(|r| r.suspicion_level == SuspicionLevel::High).cloned().collect();
    let normal_controls = match controls {
        Some(p) => Some(read_json::<Vec<Address>>(p)?.len()),
        None => None,
    };
    let input = ExplainInput {
        clues: &clues,
        l_all: &l_all,
        r_final: &r_final,
        normal_controls,
    };
    let report = generate_report(&input, rt.report_backend.as_deref(), &rt.prompts, &ExplainOptions::default())?;
    let path = out_dir.join(REPORT_FILE);
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    std::fs::write(&path, &report.markdown).map_err(io_err(&path))?;
    let file = CoverageFile {
        renderer: report.renderer,
        fallback_reason: report.fallback_reason,
        coverage: coverage(&report.markdown, &ReportChecklist::from_clues(&clues))?,
    };
    write_json(&out_dir.join(COVERAGE_FILE), &file)?;
    Ok(file)
}

pub fn cmd_score_coverage(report: &Path, clues_path: &Path) -> Result<CoverageReport, PipelineError> {
    let clues: CaseClues = read_json(clues_path)?;
    let md = std::fs::read_to_string(report).map_err(io_err(report))?;
    Ok(coverage(&md, &ReportChecklist::from_clues(&clues))?)
}

/// Audit manifest written as `run.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config_sha256: String,
    pub config: serde_json::Value,
    pub prompt_sha256: BTreeMap<String, String>,
    pub reference_time: u64,
    /// Artifact path relative to the run directory → sha256.
    pub artifacts: BTreeMap<String, String>,
}

fn artifact_hashes(dir: &Path) -> Result<BTreeMap<String, String>, PipelineError> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).map_err(io_err(&d))? {
            let path = entry.map_err(io_err(&d))?.path();
            if path.is_dir() {
                stack.push(path);
                continue;
            }
            let rel = path.strip_prefix(dir).expect("under dir").to_string_lossy().replace('\\', "/");
            if rel == MANIFEST_FILE {
                continue;
            }
            let bytes = std::fs::read(&path).map_err(io_err(&path))?;
            out.insert(rel, hex::encode(Sha256::digest(&bytes)));
        }
    }
    Ok(out)
}

/// extract → trace → sample controls (fixture mode) → explain, then `run.json`.
pub fn cmd_run(doc: &Path, cfg: &RunConfig, rt: &Runtime, req: &TraceRequest) -> Result<Manifest, PipelineError> {
    let out = &cfg.out_dir;
    cmd_extract(doc, rt, out)?;
    let clues = out.join(CLUES_FILE);
    let traced = cmd_trace(&clues, cfg, rt, out, req)?;
    let labels = out.join("labels.jsonl");
    let controls = match rt.fixture {
        Some(_) if cfg.controls > 0 => {
            let p = out.join(CONTROLS_FILE);
            cmd_sample_controls(rt, Some(&labels), cfg.controls, cfg.seed, &p)?;
            Some(p)
        }
        _ => None,
    };
    cmd_explain(&clues, &labels, controls.as_deref(), rt, out)?;
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config_sha256: cfg.digest(),
        config: cfg.manifest_json(),
        prompt_sha256: rt.prompts.hashes(),
        reference_time: traced.state.now,
        artifacts: artifact_hashes(out)?,
    };
    write_json(&out.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests;
