use std::path::{Path, PathBuf};

use super::{TraceError, TracerState};

pub fn checkpoint_path(dir: &Path, depth: u32) -> PathBuf {
    dir.join(format!("checkpoint_{depth}.json"))
}

fn err(path: &Path, detail: impl ToString) -> TraceError {
    TraceError::Checkpoint {
        path: path.to_path_buf(),
        detail: detail.to_string(),
    }
}

/// Writes via a temporary file so an interrupted write never leaves a torn checkpoint.
pub fn write_checkpoint(dir: &Path, state: &TracerState) -> Result<PathBuf, TraceError> {
    std::fs::create_dir_all(dir).map_err(|e| err(dir, e))?;
    let path = checkpoint_path(dir, state.depth);
    let tmp = path.with_extension("json.tmp");
    let body = serde_json::to_string(state).map_err(|e| err(&path, e))?;
    std::fs::write(&tmp, body).map_err(|e| err(&tmp, e))?;
    std::fs::rename(&tmp, &path).map_err(|e| err(&path, e))?;
    Ok(path)
}

/// The deepest `checkpoint_<n>.json` in `dir`, if any.
pub fn latest_checkpoint(dir: &Path) -> Result<Option<(PathBuf, TracerState)>, TraceError> {
    let entries = match std::fs::read_dir(dir) {
        Ok(e) => e,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(err(dir, e)),
    };
    let mut best: Option<(u32, PathBuf)> = None;
    for entry in entries {
        let path = entry.map_err(|e| err(dir, e))?.path();
        let depth = path
            .file_name()
            .and_then(|n| n.to_str())
            .and_then(|n| n.strip_prefix("checkpoint_"))
            .and_then(|n| n.strip_suffix(".json"))
            .and_then(|n| n.parse::<u32>().ok());
        if let Some(d) = depth {
            if best.as_ref().map_or(true, |(b, _)| d > *b) {
                best = Some((d, path));
            }
        }
    }
    let Some((_, path)) = best else { return Ok(None) };
    let text = std::fs::read_to_string(&path).map_err(|e| err(&path, e))?;
    let state = serde_json::from_str(&text).map_err(|e| err(&path, e))?;
    Ok(Some((path, state)))
}
