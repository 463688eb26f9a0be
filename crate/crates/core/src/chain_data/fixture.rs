use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::path::{Path, PathBuf};

use super::{finalize_rows, AccountTransactions, Capabilities, ChainClient, ChainError, RowError};
use crate::model::{normalize_address, Address, ChainId, TransactionRecord};

pub const FIXTURE_HEADER: [&str; 16] = [
    "hash",
    "from",
    "to",
    "value",
    "timeStamp",
    "blockNumber",
    "tokenSymbol",
    "contractAddress",
    "isError",
    "input",
    "nonce",
    "blockHash",
    "gas",
    "gasPrice",
    "gasUsed",
    "confirmations",
];

/// In-memory transactions of one chain, indexed by address.
#[derive(Debug, Clone)]
pub struct FixtureStore {
    chain: ChainId,
    records: Vec<TransactionRecord>,
    by_address: HashMap<String, Vec<usize>>,
}

impl FixtureStore {
    pub fn new(chain: ChainId, records: Vec<TransactionRecord>) -> Self {
        let mut by_address: HashMap<String, Vec<usize>> = HashMap::new();
        for (i, r) in records.iter().enumerate() {
            by_address.entry(r.from.hex().to_owned()).or_default().push(i);
            if r.to.hex() != r.from.hex() {
                by_address.entry(r.to.hex().to_owned()).or_default().push(i);
            }
        }
        Self {
            chain,
            records,
            by_address,
        }
    }

    pub fn chain(&self) -> &ChainId {
        &self.chain
    }

    pub fn records(&self) -> &[TransactionRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Every address appearing as sender or receiver, sorted.
    pub fn addresses(&self) -> Vec<Address> {
        let mut hexes: Vec<&String> = self.by_address.keys().collect();
        hexes.sort();
        hexes
            .into_iter()
            .map(|h| normalize_address(h, &self.chain).expect("indexed addresses are canonical"))
            .collect()
    }

    pub fn rows_for(&self, address: &Address) -> Vec<TransactionRecord> {
        let rows = self
            .by_address
            .get(address.hex())
            .map(|idx| idx.iter().map(|&i| self.records[i].clone()).collect::<Vec<_>>())
            .unwrap_or_default();
        finalize_rows(address, rows)
    }
}

fn parse_row(chain: &ChainId, rec: &csv::StringRecord) -> Result<TransactionRecord, String> {
    let field = |i: usize| rec.get(i).unwrap_or("").trim();
    let int = |i: usize| -> Result<u64, String> {
        field(i)
            .parse::<u64>()
            .map_err(|_| format!("{} is not an unsigned integer: {:?}", FIXTURE_HEADER[i], field(i)))
    };
    let addr = |i: usize| normalize_address(field(i), chain).map_err(|e| format!("{}: {e}", FIXTURE_HEADER[i]));
    let contract_address = match field(7) {
        "" => None,
        raw => Some(normalize_address(raw, chain).map_err(|e| format!("contractAddress: {e}"))?),
    };
    // Contract creations carry an empty `to`; the created contract is the receiver.
    let to = match (field(2), &contract_address) {
        ("", Some(c)) => c.clone(),
        _ => addr(2)?,
    };
    let is_error = match field(8) {
        "0" | "false" | "" => false,
        "1" | "true" => true,
        other => return Err(format!("isError must be 0/1: {other:?}")),
    };
    let rec = TransactionRecord {
        chain: chain.clone(),
        hash: field(0).to_ascii_lowercase(),
        from: addr(1)?,
        to,
        value: field(3).to_owned(),
        time_stamp: int(4)?,
        block_number: int(5)?,
        token_symbol: field(6).to_owned(),
        contract_address,
        is_error,
        input: field(9).to_owned(),
        nonce: int(10)?,
        block_hash: field(11).to_owned(),
        gas: field(12).to_owned(),
        gas_price: field(13).to_owned(),
        gas_used: field(14).to_owned(),
        confirmations: int(15)?,
    };
    rec.validate().map_err(|e| e.to_string())?;
    Ok(rec)
}

fn chain_from_path(path: &Path) -> Result<ChainId, ChainError> {
    let bad = || ChainError::BadFixtureName(path.to_path_buf());
    if path.extension().and_then(|e| e.to_str()) != Some("csv") {
        return Err(bad());
    }
    let stem = path.file_stem().and_then(|s| s.to_str()).ok_or_else(bad)?;
    ChainId::new(stem).map_err(|_| bad())
}

/// Loads `<chain>.csv`. Every malformed row is reported with its line number.
pub fn load_fixture(path: impl AsRef<Path>) -> Result<FixtureStore, ChainError> {
    let path = path.as_ref();
    let chain = chain_from_path(path)?;
    let io = |source| ChainError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::open(path).map_err(io)?;
    load_fixture_from_reader(chain, path.to_path_buf(), file)
}

pub(crate) fn load_fixture_from_reader(
    chain: ChainId,
    path: PathBuf,
    reader: impl std::io::Read,
) -> Result<FixtureStore, ChainError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let header = rdr.headers().map_err(|e| ChainError::SchemaMismatch {
        path: path.clone(),
        detail: e.to_string(),
    })?;
    let got: Vec<&str> = header.iter().map(str::trim).collect();
    if got != FIXTURE_HEADER {
        let missing: Vec<&str> = FIXTURE_HEADER.iter().copied().filter(|h| !got.contains(h)).collect();
        let detail = if missing.is_empty() {
            format!("expected {:?}, found {:?}", FIXTURE_HEADER.join(","), got.join(","))
        } else {
            format!("missing column(s) {}", missing.join(", "))
        };
        return Err(ChainError::SchemaMismatch { path, detail });
    }
    let mut records = Vec::new();
    let mut errors = Vec::new();
    for row in rdr.records() {
        match row {
            Err(e) => errors.push(RowError {
                line: e.position().map_or(0, |p| p.line()),
                message: e.to_string(),
            }),
            Ok(rec) => {
                let line = rec.position().map_or(0, |p| p.line());
                if rec.len() != FIXTURE_HEADER.len() {
                    errors.push(RowError {
                        line,
                        message: format!("expected 16 fields, found {}", rec.len()),
                    });
                    continue;
                }
                match parse_row(&chain, &rec) {
                    Ok(r) => records.push(r),
                    Err(message) => errors.push(RowError { line, message }),
                }
            }
        }
    }
    if !errors.is_empty() {
        return Err(ChainError::ParseError { path, rows: errors });
    }
    Ok(FixtureStore::new(chain, records))
}

/// Loads every `<chain>.csv` in a directory.
pub fn load_fixture_dir(dir: impl AsRef<Path>) -> Result<FixtureChainClient, ChainError> {
    let dir = dir.as_ref();
    let io = |source| ChainError::Io {
        path: dir.to_path_buf(),
        source,
    };
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(io)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().and_then(|e| e.to_str()) == Some("csv"))
        .collect();
    paths.sort();
    let stores = paths.iter().map(load_fixture).collect::<Result<Vec<_>, _>>()?;
    Ok(FixtureChainClient::new(stores))
}

/// Offline [`ChainClient`]: read-only after load, freely shareable.
#[derive(Debug, Clone, Default)]
pub struct FixtureChainClient {
    stores: BTreeMap<ChainId, FixtureStore>,
}

impl FixtureChainClient {
    pub fn new(stores: impl IntoIterator<Item = FixtureStore>) -> Self {
        Self {
            stores: stores.into_iter().map(|s| (s.chain.clone(), s)).collect(),
        }
    }

    pub fn store(&self, chain: &ChainId) -> Option<&FixtureStore> {
        self.stores.get(chain)
    }

    pub fn stores(&self) -> impl Iterator<Item = &FixtureStore> {
        self.stores.values()
    }
}

impl ChainClient for FixtureChainClient {
    fn capabilities(&self) -> Capabilities {
        Capabilities {
            chains: self.stores.keys().cloned().collect(),
            rate_limit: None,
        }
    }

    fn fetch_account_graph(&self, address: &Address) -> Result<AccountTransactions, ChainError> {
        let store = self
            .stores
            .get(address.chain())
            .ok_or_else(|| ChainError::UnknownChain(address.chain().clone()))?;
        Ok(AccountTransactions {
            txs: store.rows_for(address),
            truncated: false,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "hash,from,to,value,timeStamp,blockNumber,tokenSymbol,contractAddress,isError,input,nonce,blockHash,gas,gasPrice,gasUsed,confirmations";

    fn h(n: u8) -> String {
        format!("0x{}", format!("{n:02x}").repeat(32))
    }

    fn a(n: u8) -> String {
        format!("0x{}", format!("{n:02x}").repeat(20))
    }

    fn row(hash: u8, from: u8, to: u8, ts: &str, block: u64) -> String {
        format!(
            "{},{},{},1000,{ts},{block},,,0,0x,1,{},21000,1,21000,10",
            h(hash),
            a(from),
            a(to),
            h(200)
        )
    }

    fn load(text: &str) -> Result<FixtureStore, ChainError> {
        load_fixture_from_reader(ChainId::ethereum(), "ethereum.csv".into(), text.as_bytes())
    }

    #[test]
    fn loads_well_formed_rows() {
        let mut text = format!("{HEADER}\n");
        for i in 0..10u8 {
            text.push_str(&row(i + 1, 1, 2, "1700000000", 100 + u64::from(i)));
            text.push('\n');
        }
        assert_eq!(load(&text).unwrap().len(), 10);
    }

    #[test]
    fn missing_column_is_schema_mismatch() {
        let text = HEADER.replace("tokenSymbol,", "");
        match load(&format!("{text}\n")) {
            Err(ChainError::SchemaMismatch { detail, .. }) => assert!(detail.contains("tokenSymbol")),
            other => panic!("expected SchemaMismatch, got {other:?}"),
        }
    }

    #[test]
    fn non_numeric_timestamp_reports_line() {
        let text = format!(
            "{HEADER}\n{}\n{}\n",
            row(1, 1, 2, "1700000000", 1),
            row(2, 1, 2, "yesterday", 2)
        );
        match load(&text) {
            Err(ChainError::ParseError { rows, .. }) => {
                assert_eq!(rows.len(), 1);
                assert_eq!(rows[0].line, 3);
                assert!(rows[0].message.contains("timeStamp"));
            }
            other => panic!("expected ParseError, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_rows_collapse_and_sort_by_block() {
        let text = format!(
            "{HEADER}\n{}\n{}\n{}\n{}\n",
            row(3, 1, 2, "1700000300", 30),
            row(1, 2, 1, "1700000100", 10),
            row(1, 2, 1, "1700000100", 10),
            row(9, 5, 6, "1700000200", 20),
        );
        let client = FixtureChainClient::new([load(&text).unwrap()]);
        let addr = normalize_address(&a(1), &ChainId::ethereum()).unwrap();
        let got = client.fetch_account_graph(&addr).unwrap().txs;
        assert_eq!(got.len(), 2);
        assert_eq!(got[0].block_number, 10);
        assert_eq!(got[1].block_number, 30);
    }

    #[test]
    fn inactive_address_yields_nothing() {
        let text = format!("{HEADER}\n{}\n", row(1, 1, 2, "1700000000", 1));
        let client = FixtureChainClient::new([load(&text).unwrap()]);
        let addr = normalize_address(&a(77), &ChainId::ethereum()).unwrap();
        assert!(client.fetch_account_graph(&addr).unwrap().txs.is_empty());
    }

    #[test]
    fn unknown_chain_is_an_error() {
        let client = FixtureChainClient::default();
        let addr = normalize_address(&a(1), &ChainId::new("bsc").unwrap()).unwrap();
        assert!(matches!(
            client.fetch_account_graph(&addr),
            Err(ChainError::UnknownChain(_))
        ));
    }

    #[test]
    fn contract_creation_uses_contract_address_as_receiver() {
        let text = format!(
            "{HEADER}\n{},{},,0,1700000000,1,,{},0,0x60,1,{},21000,1,21000,10\n",
            h(1),
            a(1),
            a(9),
            h(2)
        );
        let store = load(&text).unwrap();
        assert_eq!(store.records()[0].to.hex(), a(9));
    }
}
