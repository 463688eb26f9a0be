use std::fs;

use super::*;
use crate::model::normalize_address;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

fn fixture_cfg(out: &Path) -> RunConfig {
    RunConfig {
        fixture_dir: Some(fixtures().join("chains")),
        blacklist: Some(fixtures().join("blacklist.csv")),
        out_dir: out.to_path_buf(),
        now: Some(1_743_724_800),
        ..Default::default()
    }
}

#[test]
fn env_beats_flags_beats_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.json");
    fs::write(
        &path,
        r#"{"seed": 1, "out_dir": "results", "fixture_dir": "chains", "llm": {"endpoint": "http://file"}, "tracer": {"max_depth": 4}}"#,
    )
    .unwrap();
    let mut cfg = RunConfig::load(&path).unwrap();
    assert_eq!(cfg.out_dir, dir.path().join("results"));
    assert_eq!(cfg.fixture_dir, Some(dir.path().join("chains")));
    assert_eq!((cfg.seed, cfg.tracer.max_depth, cfg.tracer.k), (1, 4, 100));

    cfg.apply_overrides(&Overrides {
        seed: Some(2),
        llm_endpoint: Some("http://flag".into()),
        frontier_cap: Some(10),
        ..Default::default()
    });
    assert_eq!(cfg.llm.endpoint.as_deref(), Some("http://flag"));
    cfg.apply_env(|k| match k {
        "RISKTAGGER_LLM_ENDPOINT" => Some("http://env".into()),
        "RISKTAGGER_CACHE_DIR" => Some("/tmp/cache".into()),
        _ => None,
    });
    assert_eq!(cfg.llm.endpoint.as_deref(), Some("http://env"));
    assert_eq!(cfg.cache_dir, Some(PathBuf::from("/tmp/cache")));
    assert_eq!((cfg.seed, cfg.tracer.frontier_cap), (2, Some(10)));
}

#[test]
fn config_invariants() {
    let bare = RunConfig::default();
    assert!(matches!(bare.validate(), Err(PipelineError::Config(m)) if m.contains("fixture_dir")));
    let llm = RunConfig {
        backend: BackendMode::Llm,
        ..fixture_cfg(Path::new("out"))
    };
    assert!(matches!(llm.validate(), Err(PipelineError::Config(m)) if m.contains("endpoint")));
    let live = RunConfig {
        adapter: AdapterMode::Live,
        ..Default::default()
    };
    assert!(live.validate().is_ok());
    let mut other = fixture_cfg(Path::new("elsewhere"));
    assert_eq!(other.digest(), fixture_cfg(Path::new("out")).digest(), "out_dir is not part of the digest");
    other.seed = 8;
    assert_ne!(other.digest(), fixture_cfg(Path::new("out")).digest());
}

#[test]
fn extract_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let rt = Runtime::build(&fixture_cfg(dir.path())).unwrap();

    let ok = cmd_extract(&fixtures().join("bybit_incident.txt"), &rt, dir.path()).unwrap();
    assert!(ok.is_complete());
    assert!(dir.path().join(CLUES_FILE).exists() && dir.path().join(AUDIT_FILE).exists());

    let empty = dir.path().join("empty.txt");
    fs::write(&empty, "").unwrap();
    let err = cmd_extract(&empty, &rt, dir.path()).unwrap_err();
    assert!(matches!(err, PipelineError::Extract(ExtractError::EmptyDocument)));
    assert_eq!(err.exit_code(), EXIT_FAILURE);

    let no_usd = dir.path().join("no_usd.txt");
    let text = fs::read_to_string(fixtures().join("bybit_incident.txt")).unwrap();
    let stripped = regex::Regex::new(r"\$[0-9.,]+( billion| million)?").unwrap().replace_all(&text, "an undisclosed sum");
    fs::write(&no_usd, stripped.as_ref()).unwrap();
    let err = cmd_extract(&no_usd, &rt, dir.path()).unwrap_err();
    assert_eq!(err.exit_code(), EXIT_INCOMPLETE);
    match err {
        PipelineError::Incomplete { missing, listing } => {
            assert_eq!(missing, vec![ClueField::StolenUsd]);
            assert!(listing.contains("stolen_usd: missing"), "{listing}");
        }
        other => panic!("{other}"),
    }

    let missing_file = cmd_extract(&dir.path().join("nope.txt"), &rt, dir.path()).unwrap_err();
    assert_eq!(missing_file.exit_code(), EXIT_FAILURE);
}

#[test]
fn trace_without_attackers_is_incomplete() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture_cfg(dir.path());
    let rt = Runtime::build(&cfg).unwrap();
    cmd_extract(&fixtures().join("bybit_incident.txt"), &rt, dir.path()).unwrap();
    let path = dir.path().join(CLUES_FILE);
    let mut clues: CaseClues = read_json(&path).unwrap();
    clues.attacker_addresses.clear();
    write_json(&path, &clues).unwrap();
    let err = cmd_trace(&path, &cfg, &rt, dir.path(), &TraceRequest::default()).unwrap_err();
    assert!(matches!(err, PipelineError::NoSeeds));
    assert_eq!(err.exit_code(), EXIT_INCOMPLETE);

    let with_victims = RunConfig {
        seed_victims: true,
        tracer: TracerConfig {
            max_depth: 1,
            ..Default::default()
        },
        ..cfg
    };
    let out = cmd_trace(&path, &with_victims, &rt, dir.path(), &TraceRequest::default()).unwrap();
    assert_eq!(out.state.l_all.len(), 1);
    assert_eq!(out.state.l_all[0].target_address, clues.victim_addresses[0]);
}

#[test]
fn controls_are_seeded_and_unreached() {
    let fixture = load_fixture_dir(fixtures().join("chains")).unwrap();
    let a = sample_controls(&fixture, &[], 1000, 7);
    assert_eq!(a, sample_controls(&fixture, &[], 1000, 7));
    let total: BTreeSet<Address> = fixture.stores().flat_map(|s| s.addresses()).collect();
    assert_eq!(a.len(), total.len(), "asking for more than exist returns the whole pool");

    let ten = sample_controls(&fixture, &[], 10, 7);
    assert_eq!(ten.len(), 10);
    assert!(ten.windows(2).all(|w| w[0] < w[1]));
    assert_ne!(ten, sample_controls(&fixture, &[], 10, 8));

    let reached = normalize_address("0x47666fab8bd0ac7003bce3f5c3585383f09486e2", &ChainId::ethereum()).unwrap();
    let label = RiskAssessment {
        target_address: reached.clone(),
        suspicion_level: SuspicionLevel::High,
        transaction_patterns: crate::model::RiskDimension::new("", ""),
        fund_flows: crate::model::RiskDimension::new("", ""),
        associated_addresses: crate::model::RiskDimension::new("", ""),
        temporal_signs: crate::model::RiskDimension::new("", ""),
        justification: String::new(),
        gaps: String::new(),
        out_neighbors: Vec::new(),
        hop_depth: 0,
        reflection_issues: Vec::new(),
        reasoner_backend: "rules".into(),
    };
    let all = sample_controls(&fixture, &[label], 1000, 7);
    assert_eq!(all.len(), total.len() - 1);
    assert!(!all.contains(&reached));
}

#[test]
fn sampling_needs_fixture_mode() {
    let rt = Runtime::build(&RunConfig {
        adapter: AdapterMode::Live,
        live: LiveSettings {
            base_url: "http://127.0.0.1:9/api".into(),
            ..Default::default()
        },
        ..Default::default()
    })
    .unwrap();
    let out = tempfile::tempdir().unwrap();
    let err = cmd_sample_controls(&rt, None, 5, 7, &out.path().join("c.json")).unwrap_err();
    assert!(matches!(err, PipelineError::Config(_)));
}
