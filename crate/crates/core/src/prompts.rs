//! Prompt registry: the built-in templates, optional overrides from a
//! directory, sha256 pins and single-pass placeholder rendering.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptId {
    CotPart1,
    CotPart2,
    Reflection,
    ExplainerPart1,
    ExplainerPart2,
    /// Per-chunk clue extraction. Authored for this crate; not a transcription.
    ExtractChunk,
}

impl PromptId {
    pub const ALL: [PromptId; 6] = [
        PromptId::CotPart1,
        PromptId::CotPart2,
        PromptId::Reflection,
        PromptId::ExplainerPart1,
        PromptId::ExplainerPart2,
        PromptId::ExtractChunk,
    ];

    pub fn file_stem(self) -> &'static str {
        match self {
            PromptId::CotPart1 => "cot_part1",
            PromptId::CotPart2 => "cot_part2",
            PromptId::Reflection => "reflection",
            PromptId::ExplainerPart1 => "explainer_part1",
            PromptId::ExplainerPart2 => "explainer_part2",
            PromptId::ExtractChunk => "extract_chunk",
        }
    }

    fn builtin(self) -> &'static str {
        match self {
            PromptId::CotPart1 => include_str!("../prompts/cot_part1.txt"),
            PromptId::CotPart2 => include_str!("../prompts/cot_part2.txt"),
            PromptId::Reflection => include_str!("../prompts/reflection.txt"),
            PromptId::ExplainerPart1 => include_str!("../prompts/explainer_part1.txt"),
            PromptId::ExplainerPart2 => include_str!("../prompts/explainer_part2.txt"),
            PromptId::ExtractChunk => include_str!("../prompts/extract_chunk.txt"),
        }
    }
}

impl fmt::Display for PromptId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.file_stem())
    }
}

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("template `{template}` has no binding for placeholder {{{name}}}")]
    MissingPlaceholder { template: PromptId, name: String },
    #[error("template `{template}` hash {actual} does not match pinned {expected}")]
    PinMismatch {
        template: PromptId,
        expected: String,
        actual: String,
    },
    #[error("cannot read template {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn placeholder_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\{([a-z_]+)\}").expect("valid regex"))
}

/// Names of the `{placeholder}` slots in `text`, in order of appearance.
pub fn placeholders(text: &str) -> Vec<String> {
    placeholder_re()
        .captures_iter(text)
        .map(|c| c[1].to_owned())
        .collect()
}

/// Literal text before the first placeholder (the whole text if there is none).
pub fn placeholder_prefix(text: &str) -> &str {
    placeholder_re().find(text).map_or(text, |m| &text[..m.start()])
}

pub fn sha256_hex(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptRegistry {
    templates: BTreeMap<PromptId, String>,
}

impl Default for PromptRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}

impl PromptRegistry {
    pub fn builtin() -> Self {
        Self {
            templates: PromptId::ALL.iter().map(|&id| (id, id.builtin().to_owned())).collect(),
        }
    }

    /// Built-ins overridden by any `<id>.txt` present in `dir`.
    pub fn load_dir(dir: &Path) -> Result<Self, PromptError> {
        let mut reg = Self::builtin();
        for id in PromptId::ALL {
            let path = dir.join(format!("{}.txt", id.file_stem()));
            if path.exists() {
                let text = std::fs::read_to_string(&path).map_err(|source| PromptError::Io { path, source })?;
                reg.templates.insert(id, text);
            }
        }
        Ok(reg)
    }

    pub fn text(&self, id: PromptId) -> &str {
        &self.templates[&id]
    }

    pub fn hashes(&self) -> BTreeMap<String, String> {
        self.templates
            .iter()
            .map(|(id, t)| (id.file_stem().to_owned(), sha256_hex(t)))
            .collect()
    }

    /// Fails on the first template whose hash differs from its pin.
    /// Templates without a pin are accepted.
    pub fn verify_pins(&self, pins: &BTreeMap<String, String>) -> Result<(), PromptError> {
        for (id, text) in &self.templates {
            if let Some(expected) = pins.get(id.file_stem()) {
                let actual = sha256_hex(text);
                if !actual.eq_ignore_ascii_case(expected) {
                    return Err(PromptError::PinMismatch {
                        template: *id,
                        expected: expected.clone(),
                        actual,
                    });
                }
            }
        }
        Ok(())
    }

    /// Substitutes every `{name}` slot in one pass, so bound values that
    /// themselves contain braces are never re-expanded.
    pub fn render(&self, id: PromptId, bindings: &[(&str, &str)]) -> Result<String, PromptError> {
        render_text(id, self.text(id), bindings)
    }
}

pub(crate) fn render_text(id: PromptId, text: &str, bindings: &[(&str, &str)]) -> Result<String, PromptError> {
    let mut out = String::with_capacity(text.len());
    let mut last = 0;
    for cap in placeholder_re().captures_iter(text) {
        let whole = cap.get(0).expect("match");
        let name = &cap[1];
        let value = bindings
            .iter()
            .find(|(k, _)| *k == name)
            .map(|(_, v)| *v)
            .ok_or_else(|| PromptError::MissingPlaceholder {
                template: id,
                name: name.to_owned(),
            })?;
        out.push_str(&text[last..whole.start()]);
        out.push_str(value);
        last = whole.end();
    }
    out.push_str(&text[last..]);
    Ok(out)
}
