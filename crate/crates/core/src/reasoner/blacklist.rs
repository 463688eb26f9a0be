use std::collections::HashMap;
use std::path::Path;

use super::ReasonerError;
use crate::model::{normalize_address, Address, ChainId};

/// Known high-risk entities, keyed by address hex.
///
/// Membership ignores the chain: an exploit wallet reused on an EVM
/// sidechain keeps its label.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Blacklist {
    labels: HashMap<String, String>,
}

impl Blacklist {
    /// One `address,label` pair per line; `#` comments and blank lines skipped.
    pub fn parse(text: &str) -> Result<Self, ReasonerError> {
        let mut labels = HashMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (addr, label) = line.split_once(',').unwrap_or((line, ""));
            if addr.trim().eq_ignore_ascii_case("address") {
                continue;
            }
            let a = normalize_address(addr.trim(), &ChainId::ethereum()).map_err(|e| ReasonerError::Blacklist {
                line: n + 1,
                detail: e.to_string(),
            })?;
            labels.insert(a.hex().to_owned(), label.trim().to_owned());
        }
        Ok(Self { labels })
    }

    pub fn load(path: &Path) -> Result<Self, ReasonerError> {
        let text = std::fs::read_to_string(path).map_err(|e| ReasonerError::Blacklist {
            line: 0,
            detail: format!("{}: {e}", path.display()),
        })?;
        Self::parse(&text)
    }

    pub fn insert(&mut self, address: &Address, label: impl Into<String>) {
        self.labels.insert(address.hex().to_owned(), label.into());
    }

    pub fn label(&self, address: &Address) -> Option<&str> {
        self.labels.get(address.hex()).map(String::as_str)
    }

    pub fn contains(&self, address: &Address) -> bool {
        self.labels.contains_key(address.hex())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}
