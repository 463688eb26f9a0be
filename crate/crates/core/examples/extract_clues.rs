// Pull the case clues out of the bundled incident write-up.

use std::path::Path;

use risktagger::extractor::{extract_document, ExtractOptions, PatternBackend};
use risktagger::prompts::PromptRegistry;

pub fn run_example() -> anyhow::Result<()> {
    let doc = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/bybit_incident.txt"))?;
    let ex = extract_document(&doc, &PatternBackend, &PromptRegistry::builtin(), &ExtractOptions::default())?;
    for (field, status) in &ex.status {
        println!("{field:?}: {status:?}");
    }
    println!("{}", serde_json::to_string_pretty(&ex.clues)?);
    anyhow::ensure!(ex.is_complete(), "missing {:?}", ex.missing());
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run_example()
}
