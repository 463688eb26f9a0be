//! Recovering a JSON object from free-form model output.

use serde_json::Value;

/// How the object was recovered.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Recovery {
    /// The whole text was already an object.
    Clean,
    /// Code fences were stripped.
    Fences,
    /// Text outside the outermost braces was dropped.
    Braces,
    /// The first well-formed object embedded in surrounding prose.
    Scan,
}

fn as_object(text: &str) -> Option<Value> {
    serde_json::from_str::<Value>(text).ok().filter(Value::is_object)
}

fn strip_fences(text: &str) -> Option<&str> {
    let start = text.find("```")?;
    let after = &text[start + 3..];
    let body_start = after.find('\n').map(|i| i + 1).unwrap_or(0);
    let body = &after[body_start..];
    let end = body.find("```").unwrap_or(body.len());
    Some(body[..end].trim())
}

/// First JSON object found in `raw`, trying repairs in a fixed order.
pub fn extract_object(raw: &str) -> Option<(Value, Recovery)> {
    let trimmed = raw.trim();
    if let Some(v) = as_object(trimmed) {
        return Some((v, Recovery::Clean));
    }
    let unfenced = strip_fences(trimmed);
    if let Some(v) = unfenced.and_then(as_object) {
        return Some((v, Recovery::Fences));
    }
    let base = unfenced.unwrap_or(trimmed);
    if let (Some(a), Some(b)) = (base.find('{'), base.rfind('}')) {
        if a < b {
            if let Some(v) = as_object(&base[a..=b]) {
                return Some((v, Recovery::Braces));
            }
        }
    }
    first_object_from(raw, 0).map(|(v, _)| (v, Recovery::Scan))
}

/// First well-formed object starting at or after byte `from`, with its start offset.
pub fn first_object_from(text: &str, from: usize) -> Option<(Value, usize)> {
    let mut pos = from;
    while let Some(off) = text.get(pos..)?.find('{') {
        let start = pos + off;
        let mut stream = serde_json::Deserializer::from_str(&text[start..]).into_iter::<Value>();
        if let Some(Ok(v)) = stream.next() {
            if v.is_object() {
                return Some((v, start));
            }
        }
        pos = start + 1;
    }
    None
}
