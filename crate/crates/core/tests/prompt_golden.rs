mod common;

use std::path::Path;

use risktagger::prompts::PromptRegistry;

#[test]
fn rendered_prompts_match_transcriptions() {
    for (name, got, expected) in common::checks::prompt_renders() {
        assert_eq!(got, expected, "{name}");
    }
}

#[test]
fn shipped_template_files_are_the_builtins() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("prompts");
    let loaded = PromptRegistry::load_dir(&dir).unwrap();
    assert_eq!(loaded.hashes(), PromptRegistry::builtin().hashes());
}
