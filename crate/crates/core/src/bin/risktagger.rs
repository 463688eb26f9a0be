use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use risktagger::pipeline::{
    cmd_explain, cmd_extract, cmd_run, cmd_sample_controls, cmd_score_coverage, cmd_trace, AdapterMode, BackendMode,
    Overrides, PipelineError, RunConfig, Runtime, TraceRequest, CONTROLS_FILE,
};

/// Money-laundering annotation pipeline: extract clues, trace funds, explain.
///
/// Settings come from the JSON config, then flags, then environment
/// variables (RISKTAGGER_LLM_ENDPOINT, RISKTAGGER_CACHE_DIR), each layer
/// overriding the previous one. API keys are read from
/// RISKTAGGER_CHAIN_API_KEY and RISKTAGGER_LLM_KEY.
#[derive(Parser)]
#[command(name = "risktagger", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Global {
    /// JSON run configuration.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, short, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    adapter: Option<AdapterMode>,
    #[arg(long, global = true)]
    backend: Option<BackendMode>,
    /// Directory of <chain>.csv transaction fixtures.
    #[arg(long, global = true)]
    fixtures: Option<PathBuf>,
    #[arg(long, global = true)]
    bridges: Option<PathBuf>,
    #[arg(long, global = true)]
    blacklist: Option<PathBuf>,
    #[arg(long, global = true)]
    cache_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    llm_endpoint: Option<String>,
    /// Maximum hops D.
    #[arg(long, global = true)]
    depth: Option<u32>,
    /// Accounts kept per hop.
    #[arg(long, global = true)]
    cap: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Reference unix time for reproducible scoring.
    #[arg(long, global = true)]
    now: Option<u64>,
    /// Also seed the trace with victim addresses.
    #[arg(long, global = true)]
    seed_victims: bool,
    /// Abort on the first port failure instead of skipping the account.
    #[arg(long, global = true)]
    strict: bool,
}

#[derive(Subcommand)]
enum Cmd {
    /// Extract case clues from an incident document.
    Extract { doc: PathBuf },
    /// Trace from the attacker addresses in a clues file.
    Trace {
        clues: PathBuf,
        #[arg(long)]
        resume: bool,
        /// Stop after this many hops (a checkpoint is kept).
        #[arg(long)]
        stop_after: Option<u32>,
    },
    /// Write the auditor report and its coverage score.
    Explain {
        clues: PathBuf,
        labels: PathBuf,
        #[arg(long)]
        controls: Option<PathBuf>,
    },
    /// Extract, trace, sample controls and explain in one go.
    Run {
        doc: PathBuf,
        #[arg(long)]
        resume: bool,
    },
    /// Sample unreached fixture accounts as normal controls.
    SampleControls {
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long, short)]
        n: usize,
    },
    /// Score a report against the checklist built from clues.
    ScoreCoverage { report: PathBuf, clues: PathBuf },
}

fn overrides(g: &Global) -> Overrides {
    Overrides {
        out_dir: g.out.clone(),
        adapter: g.adapter,
        backend: g.backend,
        fixture_dir: g.fixtures.clone(),
        bridges: g.bridges.clone(),
        blacklist: g.blacklist.clone(),
        cache_dir: g.cache_dir.clone(),
        llm_endpoint: g.llm_endpoint.clone(),
        max_depth: g.depth,
        frontier_cap: g.cap,
        seed: g.seed,
        now: g.now,
        seed_victims: g.seed_victims,
        strict: g.strict,
    }
}

fn print_json(v: &impl serde::Serialize) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(v)?;
    match writeln!(std::io::stdout(), "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn execute(cli: Cli, cancel: Arc<AtomicBool>) -> anyhow::Result<()> {
    if let Cmd::ScoreCoverage { report, clues } = &cli.cmd {
        return print_json(&cmd_score_coverage(report, clues)?);
    }
    let cfg = RunConfig::resolve(cli.global.config.as_deref(), &overrides(&cli.global))?;
    let rt = Runtime::build(&cfg).context("building adapters")?;
    let out = cfg.out_dir.clone();
    let req = |resume, stop_after_depth| TraceRequest {
        resume,
        stop_after_depth,
        cancel: Some(cancel.clone()),
    };
    match cli.cmd {
        Cmd::Extract { doc } => {
            let ex = cmd_extract(&doc, &rt, &out)?;
            print_json(&ex.status)?;
        }
        Cmd::Trace {
            clues,
            resume,
            stop_after,
        } => {
            let o = cmd_trace(&clues, &cfg, &rt, &out, &req(resume, stop_after))?;
            print_json(&risktagger::tracer::level_histogram(&o.state.l_all))?;
        }
        Cmd::Explain {
            clues,
            labels,
            controls,
        } => {
            let cov = cmd_explain(&clues, &labels, controls.as_deref(), &rt, &out)?;
            eprintln!("coverage {:.3} ({})", cov.coverage.r_coverage, cov.renderer);
        }
        Cmd::Run { doc, resume } => {
            let m = cmd_run(&doc, &cfg, &rt, &req(resume, None))?;
            eprintln!("wrote {} artifact(s) to {}", m.artifacts.len(), out.display());
        }
        Cmd::SampleControls { labels, n } => {
            let picked = cmd_sample_controls(&rt, labels.as_deref(), n, cfg.seed, &out.join(CONTROLS_FILE))?;
            eprintln!("sampled {} control account(s)", picked.len());
        }
        Cmd::ScoreCoverage { .. } => unreachable!(),
    }
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let cancel = Arc::new(AtomicBool::new(false));
    let flag = cancel.clone();
    if let Err(e) = ctrlc::set_handler(move || flag.store(true, Ordering::SeqCst)) {
        tracing::warn!("cannot install Ctrl-C handler: {e}");
    }
    match execute(cli, cancel) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e.downcast_ref::<PipelineError>().map_or(1, PipelineError::exit_code);
            ExitCode::from(code as u8)
        }
    }
}
