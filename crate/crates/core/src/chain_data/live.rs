use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use reqwest::blocking::Client;
use reqwest::Url;
use serde_json::Value;
use tracing::{debug, warn};

use super::ratelimit::{Semaphore, TokenBucket};
use super::{finalize_rows, AccountTransactions, Capabilities, ChainClient, ChainError, FetchCache};
use crate::model::{normalize_address, Address, ChainId, TransactionRecord};

pub const API_KEY_ENV: &str = "RISKTAGGER_CHAIN_API_KEY";

const ACTIONS: [&str; 2] = ["txlist", "tokentx"];

#[derive(Debug, Clone, PartialEq)]
pub struct LiveChainConfig {
    pub chain: ChainId,
    /// Etherscan-family `api` endpoint, e.g. `https://api.etherscan.io/api`.
    pub base_url: String,
    pub api_key: Option<String>,
    /// Sent as `chainid=` for multichain (v2) endpoints.
    pub chain_id_param: Option<u64>,
    pub page_size: usize,
    pub max_pages: usize,
    pub requests_per_second: f64,
}

impl LiveChainConfig {
    pub fn new(chain: ChainId, base_url: impl Into<String>) -> Self {
        Self {
            chain,
            base_url: base_url.into(),
            api_key: std::env::var(API_KEY_ENV).ok(),
            chain_id_param: None,
            page_size: 1000,
            max_pages: 10,
            requests_per_second: 5.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            attempts: 3,
            base_delay: Duration::from_secs(1),
        }
    }
}

/// Live [`ChainClient`] speaking the Etherscan `module=account` dialect
/// (`txlist` + `tokentx`), with pagination, retries, a per-host token
/// bucket and an optional on-disk response cache.
pub struct EtherscanClient {
    http: Client,
    chains: BTreeMap<ChainId, LiveChainConfig>,
    buckets: HashMap<String, TokenBucket>,
    in_flight: Semaphore,
    cache: Option<FetchCache>,
    retry: RetryPolicy,
    requests: AtomicU64,
}

impl EtherscanClient {
    pub fn new(
        configs: impl IntoIterator<Item = LiveChainConfig>,
        cache: Option<FetchCache>,
        retry: RetryPolicy,
        max_in_flight: usize,
    ) -> Self {
        let chains: BTreeMap<ChainId, LiveChainConfig> =
            configs.into_iter().map(|c| (c.chain.clone(), c)).collect();
        let mut buckets = HashMap::new();
        for cfg in chains.values() {
            buckets
                .entry(host_of(&cfg.base_url))
                .or_insert_with(|| TokenBucket::new(cfg.requests_per_second, 1));
        }
        let http = Client::builder()
            .timeout(Duration::from_secs(30))
            .build()
            .expect("http client builds with static settings");
        Self {
            http,
            chains,
            buckets,
            in_flight: Semaphore::new(max_in_flight),
            cache,
            retry,
            requests: AtomicU64::new(0),
        }
    }

    /// Upstream HTTP requests issued so far (cache hits excluded).
    pub fn request_count(&self) -> u64 {
        self.requests.load(Ordering::SeqCst)
    }

    fn page_body(
        &self,
        cfg: &LiveChainConfig,
        address: &Address,
        action: &str,
        page: usize,
    ) -> Result<Vec<u8>, ChainError> {
        let key = format!("{action}_{page}");
        if let Some(cache) = &self.cache {
            if let Some(body) = cache.get(&cfg.chain, address, &key) {
                debug!(chain = %cfg.chain, %address, page = %key, "cache hit");
                return Ok(body);
            }
        }
        let body = self.get_with_retry(cfg, address, action, page)?;
        if let Some(cache) = &self.cache {
            cache.put(&cfg.chain, address, &key, &body)?;
        }
        Ok(body)
    }

    fn get_with_retry(
        &self,
        cfg: &LiveChainConfig,
        address: &Address,
        action: &str,
        page: usize,
    ) -> Result<Vec<u8>, ChainError> {
        let mut params: Vec<(&str, String)> = vec![
            ("module", "account".into()),
            ("action", action.into()),
            ("address", address.hex().into()),
            ("startblock", "0".into()),
            ("endblock", "99999999".into()),
            ("page", page.to_string()),
            ("offset", cfg.page_size.to_string()),
            ("sort", "asc".into()),
        ];
        if let Some(id) = cfg.chain_id_param {
            params.push(("chainid", id.to_string()));
        }
        if let Some(key) = &cfg.api_key {
            params.push(("apikey", key.clone()));
        }
        let unavailable = |reason: String| ChainError::ChainUnavailable {
            chain: cfg.chain.clone(),
            reason,
        };
        let mut last = unavailable("no attempt made".into());
        for attempt in 0..self.retry.attempts.max(1) {
            if attempt > 0 {
                let mut delay = self.retry.base_delay * 2u32.pow(attempt - 1);
                if let ChainError::RateLimited {
                    retry_after: Some(after),
                } = &last
                {
                    delay = delay.max(*after);
                }
                std::thread::sleep(delay);
            }
            if let Some(bucket) = self.buckets.get(&host_of(&cfg.base_url)) {
                bucket.acquire();
            }
            let _permit = self.in_flight.acquire();
            self.requests.fetch_add(1, Ordering::SeqCst);
            let resp = match self.http.get(&cfg.base_url).query(&params).send() {
                Ok(r) => r,
                Err(e) => {
                    last = unavailable(e.to_string());
                    continue;
                }
            };
            let status = resp.status();
            if status.as_u16() == 429 {
                let retry_after = resp
                    .headers()
                    .get(reqwest::header::RETRY_AFTER)
                    .and_then(|v| v.to_str().ok())
                    .and_then(|v| v.trim().parse::<u64>().ok())
                    .map(Duration::from_secs);
                last = ChainError::RateLimited { retry_after };
                continue;
            }
            if !status.is_success() {
                last = unavailable(format!("HTTP {status}"));
                continue;
            }
            let body = match resp.bytes() {
                Ok(b) => b.to_vec(),
                Err(e) => {
                    last = unavailable(e.to_string());
                    continue;
                }
            };
            match classify_body(&body) {
                BodyKind::Rows => return Ok(body),
                BodyKind::RateLimited => last = ChainError::RateLimited { retry_after: None },
                BodyKind::Failed(msg) => last = unavailable(msg),
            }
        }
        Err(last)
    }
}

enum BodyKind {
    Rows,
    RateLimited,
    Failed(String),
}

fn classify_body(body: &[u8]) -> BodyKind {
    let v: Value = match serde_json::from_slice(body) {
        Ok(v) => v,
        Err(e) => return BodyKind::Failed(format!("invalid JSON: {e}")),
    };
    let status = v.get("status").and_then(Value::as_str).unwrap_or("");
    let message = v.get("message").and_then(Value::as_str).unwrap_or("");
    match (status, v.get("result")) {
        ("1", Some(Value::Array(_))) => BodyKind::Rows,
        (_, Some(Value::Array(rows))) if rows.is_empty() && message.starts_with("No transactions found") => {
            BodyKind::Rows
        }
        (_, Some(Value::String(r))) if r.to_ascii_lowercase().contains("rate limit") => BodyKind::RateLimited,
        (_, result) => BodyKind::Failed(format!(
            "status {status:?}: {message} {}",
            result.map(Value::to_string).unwrap_or_default()
        )),
    }
}

fn host_of(url: &str) -> String {
    Url::parse(url)
        .ok()
        .and_then(|u| u.host_str().map(|h| format!("{h}:{}", u.port_or_known_default().unwrap_or(0))))
        .unwrap_or_else(|| url.to_owned())
}

fn parse_rows(chain: &ChainId, action: &str, body: &[u8]) -> Vec<TransactionRecord> {
    let v: Value = serde_json::from_slice(body).unwrap_or(Value::Null);
    let rows = v.get("result").and_then(Value::as_array).cloned().unwrap_or_default();
    rows.iter()
        .filter_map(|row| match row_to_record(chain, action, row) {
            Ok(rec) => Some(rec),
            Err(e) => {
                warn!(%chain, action, error = %e, "skipping malformed upstream row");
                None
            }
        })
        .collect()
}

fn row_to_record(chain: &ChainId, action: &str, row: &Value) -> Result<TransactionRecord, String> {
    let s = |k: &str| row.get(k).and_then(Value::as_str).unwrap_or("").trim().to_owned();
    let int = |k: &str| -> Result<u64, String> {
        let raw = s(k);
        if raw.is_empty() {
            return Ok(0);
        }
        raw.parse().map_err(|_| format!("{k} is not an integer: {raw:?}"))
    };
    let addr = |raw: &str| normalize_address(raw, chain).map_err(|e| e.to_string());
    let is_token = action == "tokentx";
    let contract = match s("contractAddress").as_str() {
        "" => None,
        raw => Some(addr(raw)?),
    };
    let to = match (s("to").as_str(), &contract) {
        ("", Some(c)) => c.clone(),
        (raw, _) => addr(raw)?,
    };
    let rec = TransactionRecord {
        chain: chain.clone(),
        hash: s("hash").to_ascii_lowercase(),
        from: addr(&s("from"))?,
        to,
        value: s("value"),
        time_stamp: int("timeStamp")?,
        block_number: int("blockNumber")?,
        token_symbol: if is_token { s("tokenSymbol") } else { String::new() },
        contract_address: if is_token { contract } else { None },
        is_error: s("isError") == "1",
        input: s("input"),
        nonce: int("nonce")?,
        block_hash: s("blockHash"),
        gas: non_empty_int(s("gas")),
        gas_price: non_empty_int(s("gasPrice")),
        gas_used: non_empty_int(s("gasUsed")),
        confirmations: int("confirmations")?,
    };
    rec.validate().map_err(|e| e.to_string())?;
    Ok(rec)
}

fn non_empty_int(s: String) -> String {
    if s.is_empty() {
        "0".to_owned()
    } else {
        s
    }
}

impl ChainClient for EtherscanClient {
    fn capabilities(&self) -> Capabilities {
        Capabilities {
            chains: self.chains.keys().cloned().collect(),
            rate_limit: self
                .chains
                .values()
                .map(|c| c.requests_per_second)
                .reduce(f64::min),
        }
    }

    fn fetch_account_graph(&self, address: &Address) -> Result<AccountTransactions, ChainError> {
        let cfg = self
            .chains
            .get(address.chain())
            .ok_or_else(|| ChainError::UnknownChain(address.chain().clone()))?;
        let mut rows = Vec::new();
        let mut truncated = false;
        for action in ACTIONS {
            for page in 1..=cfg.max_pages.max(1) {
                let body = self.page_body(cfg, address, action, page)?;
                let page_rows = parse_rows(&cfg.chain, action, &body);
                let full = page_rows.len() >= cfg.page_size;
                rows.extend(page_rows);
                if !full {
                    break;
                }
                if page == cfg.max_pages {
                    warn!(%address, action, "page limit reached; history truncated");
                    truncated = true;
                }
            }
        }
        Ok(AccountTransactions {
            txs: finalize_rows(address, rows),
            truncated,
        })
    }
}
