use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use super::ChainError;
use crate::model::{Address, ChainId};

/// On-disk response cache laid out as `<root>/<chain>/<address>/<page>.json`.
///
/// Bodies are stored exactly as received; the fetch time goes into a
/// `<page>.meta` sidecar. Writes land in a temp file and are renamed into
/// place, so concurrent readers never observe a partial body.
#[derive(Debug, Clone)]
pub struct FetchCache {
    root: PathBuf,
}

impl FetchCache {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path_for(&self, chain: &ChainId, address: &Address, page: &str) -> PathBuf {
        self.root
            .join(chain.as_str())
            .join(address.hex())
            .join(format!("{page}.json"))
    }

    pub fn get(&self, chain: &ChainId, address: &Address, page: &str) -> Option<Vec<u8>> {
        fs::read(self.path_for(chain, address, page)).ok()
    }

    pub fn put(&self, chain: &ChainId, address: &Address, page: &str, body: &[u8]) -> Result<(), ChainError> {
        let path = self.path_for(chain, address, page);
        let dir = path.parent().expect("cache path has a parent");
        let io = |source| ChainError::Io {
            path: path.clone(),
            source,
        };
        fs::create_dir_all(dir).map_err(io)?;
        let tmp = dir.join(format!(".{page}.{}.tmp", std::process::id()));
        fs::write(&tmp, body).map_err(io)?;
        fs::rename(&tmp, &path).map_err(io)?;
        let fetched_at = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        fs::write(dir.join(format!("{page}.meta")), format!("{{\"fetched_at\":{fetched_at}}}\n")).map_err(io)?;
        Ok(())
    }
}
