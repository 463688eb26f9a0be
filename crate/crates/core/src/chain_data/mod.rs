//! Transaction retrieval. Intra-chain crawling sits behind [`ChainClient`],
//! cross-chain expansion behind [`CrossChainMatcher`]; both have offline
//! fixture-backed implementations so whole traces replay without network.

mod bridge;
mod cache;
mod fixture;
mod live;
mod ratelimit;

use std::cmp::Ordering;
use std::collections::HashSet;
use std::path::PathBuf;
use std::time::Duration;

use thiserror::Error;

use crate::model::{Address, ChainId, CrossChainPair, TransactionRecord};

pub use bridge::{native_symbol, token_name, BridgeEntry, BridgeMatcher, BridgeRegistry, MatchTolerance, NoCrossChain};
pub use cache::FetchCache;
pub use fixture::{load_fixture, load_fixture_dir, FixtureChainClient, FixtureStore, FIXTURE_HEADER};
pub use live::{EtherscanClient, LiveChainConfig, RetryPolicy, API_KEY_ENV};
pub use ratelimit::{Semaphore, TokenBucket};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowError {
    pub line: u64,
    pub message: String,
}

#[derive(Debug, Error)]
pub enum ChainError {
    #[error("chain {chain} unavailable: {reason}")]
    ChainUnavailable { chain: ChainId, reason: String },
    #[error("rate limited by upstream (retry after {retry_after:?})")]
    RateLimited { retry_after: Option<Duration> },
    #[error("unknown chain {0}")]
    UnknownChain(ChainId),
    #[error("fixture {path}: header does not match the canonical schema: {detail}")]
    SchemaMismatch { path: PathBuf, detail: String },
    #[error("fixture {path}: {} malformed row(s), first at line {}: {}", rows.len(), rows[0].line, rows[0].message)]
    ParseError { path: PathBuf, rows: Vec<RowError> },
    #[error("fixture file name {0:?} is not <chain>.csv")]
    BadFixtureName(PathBuf),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Supported chains and request budget of a client.
#[derive(Debug, Clone, PartialEq)]
pub struct Capabilities {
    pub chains: Vec<ChainId>,
    /// Requests per second; `None` for offline adapters.
    pub rate_limit: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AccountTransactions {
    pub txs: Vec<TransactionRecord>,
    /// The page limit was hit; more history exists upstream.
    pub truncated: bool,
}

pub trait ChainClient: Send + Sync {
    fn capabilities(&self) -> Capabilities;

    /// Every native and token transfer touching `address` on `address.chain()`,
    /// deduplicated and sorted by `(blockNumber, hash)`.
    fn fetch_account_graph(&self, address: &Address) -> Result<AccountTransactions, ChainError>;
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct UnmatchedDeposit {
    pub hash: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CrossChainExpansion {
    pub pairs: Vec<CrossChainPair>,
    pub unmatched: Vec<UnmatchedDeposit>,
}

pub trait CrossChainMatcher: Send + Sync {
    fn expand(&self, address: &Address, txs: &[TransactionRecord]) -> CrossChainExpansion;
}

fn row_order(a: &TransactionRecord, b: &TransactionRecord) -> Ordering {
    (a.block_number, &a.hash, &a.from, &a.to, a.asset_key(), &a.value).cmp(&(
        b.block_number,
        &b.hash,
        &b.from,
        &b.to,
        b.asset_key(),
        &b.value,
    ))
}

/// Keeps rows touching `address`, drops duplicates, and sorts by
/// `(blockNumber, hash)` with the remaining columns as tie-breakers.
pub(crate) fn finalize_rows(
    address: &Address,
    rows: impl IntoIterator<Item = TransactionRecord>,
) -> Vec<TransactionRecord> {
    let mut seen = HashSet::new();
    let mut out: Vec<TransactionRecord> = rows
        .into_iter()
        .filter(|t| t.touches(address))
        .filter(|t| {
            seen.insert((
                t.hash.clone(),
                t.from.hex().to_owned(),
                t.to.hex().to_owned(),
                t.asset_key(),
                t.value.clone(),
            ))
        })
        .collect();
    out.sort_by(row_order);
    out
}
