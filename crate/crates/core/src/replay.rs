//! A tiny blocking HTTP/1.1 server that answers from recorded data.
//!
//! Used to exercise the live adapters offline: [`etherscan_responder`]
//! serves Etherscan-style account pages out of a [`FixtureStore`], and the
//! request counter lets callers assert that a cached run stays off the wire.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

use reqwest::Url;
use serde_json::{json, Value};

use crate::chain_data::FixtureStore;
use crate::model::{normalize_address, TransactionRecord};

#[derive(Debug, Clone)]
pub struct ReplayRequest {
    pub method: String,
    /// Path plus query string, as sent.
    pub target: String,
    pub headers: Vec<(String, String)>,
    pub body: Vec<u8>,
}

impl ReplayRequest {
    pub fn query(&self) -> Vec<(String, String)> {
        Url::parse(&format!("http://replay{}", self.target))
            .map(|u| u.query_pairs().map(|(k, v)| (k.into_owned(), v.into_owned())).collect())
            .unwrap_or_default()
    }

    pub fn param(&self, key: &str) -> Option<String> {
        self.query().into_iter().find(|(k, _)| k == key).map(|(_, v)| v)
    }

    pub fn header(&self, key: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(key))
            .map(|(_, v)| v.as_str())
    }
}

#[derive(Debug, Clone)]
pub struct ReplayResponse {
    pub status: u16,
    pub headers: Vec<(String, String)>,
    pub body: Vec<u8>,
}

impl ReplayResponse {
    pub fn json(status: u16, body: impl Into<Vec<u8>>) -> Self {
        Self {
            status,
            headers: vec![("Content-Type".into(), "application/json".into())],
            body: body.into(),
        }
    }

    pub fn with_header(mut self, key: &str, value: &str) -> Self {
        self.headers.push((key.into(), value.into()));
        self
    }
}

type Handler = Arc<dyn Fn(&ReplayRequest) -> ReplayResponse + Send + Sync>;

pub struct ReplayServer {
    addr: SocketAddr,
    requests: Arc<AtomicU64>,
    stop: Arc<AtomicBool>,
    worker: Option<JoinHandle<()>>,
}

impl ReplayServer {
    pub fn start(handler: impl Fn(&ReplayRequest) -> ReplayResponse + Send + Sync + 'static) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind loopback");
        let addr = listener.local_addr().expect("local addr");
        let requests = Arc::new(AtomicU64::new(0));
        let stop = Arc::new(AtomicBool::new(false));
        let handler: Handler = Arc::new(handler);
        let worker = {
            let (requests, stop) = (requests.clone(), stop.clone());
            std::thread::spawn(move || {
                for stream in listener.incoming() {
                    if stop.load(Ordering::SeqCst) {
                        break;
                    }
                    let Ok(stream) = stream else { continue };
                    let (handler, requests) = (handler.clone(), requests.clone());
                    std::thread::spawn(move || {
                        let _ = serve(stream, &handler, &requests);
                    });
                }
            })
        };
        Self {
            addr,
            requests,
            stop,
            worker: Some(worker),
        }
    }

    pub fn url(&self, path: &str) -> String {
        format!("http://{}{}", self.addr, path)
    }

    pub fn request_count(&self) -> u64 {
        self.requests.load(Ordering::SeqCst)
    }
}

impl Drop for ReplayServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect(self.addr);
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
    }
}

fn serve(stream: TcpStream, handler: &Handler, requests: &AtomicU64) -> std::io::Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut line = String::new();
    if reader.read_line(&mut line)? == 0 {
        return Ok(());
    }
    let mut parts = line.split_whitespace();
    let method = parts.next().unwrap_or("").to_owned();
    let target = parts.next().unwrap_or("/").to_owned();
    let mut headers = Vec::new();
    loop {
        let mut h = String::new();
        if reader.read_line(&mut h)? == 0 || h == "\r\n" || h == "\n" {
            break;
        }
        if let Some((k, v)) = h.split_once(':') {
            headers.push((k.trim().to_owned(), v.trim().to_owned()));
        }
    }
    let len = headers
        .iter()
        .find(|(k, _)| k.eq_ignore_ascii_case("content-length"))
        .and_then(|(_, v)| v.parse::<usize>().ok())
        .unwrap_or(0);
    let mut body = vec![0; len];
    reader.read_exact(&mut body)?;
    requests.fetch_add(1, Ordering::SeqCst);
    let resp = handler(&ReplayRequest {
        method,
        target,
        headers,
        body,
    });
    let mut out = stream;
    write!(out, "HTTP/1.1 {} Replay\r\n", resp.status)?;
    for (k, v) in &resp.headers {
        write!(out, "{k}: {v}\r\n")?;
    }
    write!(out, "Content-Length: {}\r\nConnection: close\r\n\r\n", resp.body.len())?;
    out.write_all(&resp.body)?;
    out.flush()
}

fn etherscan_row(t: &TransactionRecord, token: bool) -> Value {
    let mut row = json!({
        "blockNumber": t.block_number.to_string(),
        "timeStamp": t.time_stamp.to_string(),
        "hash": t.hash,
        "nonce": t.nonce.to_string(),
        "blockHash": t.block_hash,
        "from": t.from.hex(),
        "to": t.to.hex(),
        "value": t.value,
        "gas": t.gas,
        "gasPrice": t.gas_price,
        "gasUsed": t.gas_used,
        "input": t.input,
        "confirmations": t.confirmations.to_string(),
    });
    let obj = row.as_object_mut().expect("object literal");
    if token {
        obj.insert("tokenSymbol".into(), json!(t.token_symbol));
        obj.insert(
            "contractAddress".into(),
            json!(t.contract_address.as_ref().map(|c| c.hex()).unwrap_or("")),
        );
    } else {
        obj.insert("isError".into(), json!(if t.is_error { "1" } else { "0" }));
        obj.insert("contractAddress".into(), json!(""));
    }
    row
}

/// Serves `module=account&action=txlist|tokentx` pages from a fixture store.
pub fn etherscan_responder(store: FixtureStore) -> impl Fn(&ReplayRequest) -> ReplayResponse + Send + Sync {
    move |req| {
        let action = req.param("action").unwrap_or_default();
        let Some(address) = req
            .param("address")
            .and_then(|a| normalize_address(&a, store.chain()).ok())
        else {
            return ReplayResponse::json(200, r#"{"status":"0","message":"NOTOK","result":"Invalid address"}"#);
        };
        let page: usize = req.param("page").and_then(|p| p.parse().ok()).unwrap_or(1).max(1);
        let offset: usize = req.param("offset").and_then(|p| p.parse().ok()).unwrap_or(10_000).max(1);
        let token = action == "tokentx";
        let rows: Vec<Value> = store
            .rows_for(&address)
            .iter()
            .filter(|t| t.is_native() != token)
            .skip((page - 1) * offset)
            .take(offset)
            .map(|t| etherscan_row(t, token))
            .collect();
        let body = if rows.is_empty() {
            json!({"status": "0", "message": "No transactions found", "result": []})
        } else {
            json!({"status": "1", "message": "OK", "result": rows})
        };
        ReplayResponse::json(200, body.to_string())
    }
}
