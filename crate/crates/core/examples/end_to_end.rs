// extract, trace, sample controls and explain into one run directory.

use std::path::Path;

use risktagger::pipeline::{cmd_run, RunConfig, Runtime, TraceRequest};

pub fn run_example() -> anyhow::Result<()> {
    let out = tempfile::tempdir()?;
    let mut cfg = RunConfig::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/fixture.json"))?;
    cfg.out_dir = out.path().to_path_buf();
    let rt = Runtime::build(&cfg)?;
    let manifest = cmd_run(&Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/bybit_incident.txt"), &cfg, &rt, &TraceRequest::default())?;
    for (name, digest) in &manifest.artifacts {
        println!("{name:<28} {}", &digest[..16]);
    }
    let report = std::fs::read_to_string(out.path().join("report.md"))?;
    println!("{}", report.lines().take(3).collect::<Vec<_>>().join("\n"));
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run_example()
}
