//! Client for an Etherscan-style `tokennfttx` endpoint.
//!
//! Requests are `GET <base>?module=account&action=tokennfttx
//! &contractaddress=<c>&page=<p>&offset=<n>&sort=asc[&apikey=<k>]`. Each
//! row maps onto the ingest format as
//!
//! | row field   | ingest column  |
//! |-------------|----------------|
//! | `timeStamp` | `timestamp`    |
//! | `tokenID`   | `token_id`     |
//! | `value`     | `value` (wei; missing means 0) |
//! | `from`      | `from_address` |
//! | `to`        | `to_address`   |
//!
//! Pages are appended to `<out>.partial` and the next page number is saved
//! in `<out>.cursor` after every page, so a failed run resumes where it
//! stopped. A page shorter than the page size ends the fetch.

use std::fs::{self, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use nftdisk_core::ingest::{write_canonical_csv, CSV_HEADER};
use nftdisk_core::{parse_transactions, Address, InputFormat, ParseMode, TokenId, TransactionRecord, Wei};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::store::write_atomic;

pub const DEFAULT_PAGE_SIZE: u32 = 1000;

#[derive(Debug, Error)]
pub enum FetchError {
    #[error("explorer rejected the credentials: {0}")]
    AuthFailed(String),
    #[error("explorer rate limit hit{}", retry_after.map(|s| format!(", retry after {s}s")).unwrap_or_default())]
    RateLimited { retry_after: Option<u64> },
    #[error("fetch stopped after {pages} pages ({rows} rows); rerun to resume from {}: {reason}", cursor.display())]
    PartialFetch { pages: u32, rows: usize, cursor: PathBuf, reason: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FetchConfig {
    pub base_url: String,
    pub contract: String,
    pub api_key: Option<String>,
    pub page_size: u32,
    pub out: PathBuf,
    pub timeout: Duration,
}

impl FetchConfig {
    pub fn new(base_url: impl Into<String>, contract: impl Into<String>, out: impl Into<PathBuf>) -> Self {
        FetchConfig {
            base_url: base_url.into(),
            contract: contract.into(),
            api_key: None,
            page_size: DEFAULT_PAGE_SIZE,
            out: out.into(),
            timeout: Duration::from_secs(30),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct Cursor {
    contract: String,
    next_page: u32,
    rows: usize,
    /// Length of the partial file after the last complete page.
    partial_len: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FetchSummary {
    pub rows: usize,
    pub pages: u32,
    pub resumed_from_page: Option<u32>,
}

fn sidecar(out: &Path, ext: &str) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(ext);
    out.with_file_name(name)
}

enum PageError {
    Auth(String),
    Rate(Option<u64>),
    Other(String),
}

fn parse_row(row: &Value) -> Result<TransactionRecord, String> {
    let field = |name: &str| -> Option<String> {
        match row.get(name)? {
            Value::String(s) => Some(s.clone()),
            Value::Number(n) => Some(n.to_string()),
            _ => None,
        }
    };
    let need = |name: &str| field(name).ok_or_else(|| format!("row is missing {name}"));
    let timestamp = need("timeStamp")?.parse::<u64>().map_err(|e| format!("timeStamp: {e}"))?;
    let token = need("tokenID")?.parse::<u128>().map_err(|e| format!("tokenID: {e}"))?;
    let value = match field("value") {
        Some(v) => v.parse::<u128>().map_err(|e| format!("value: {e}"))?,
        None => 0,
    };
    let from: Address = need("from")?.parse().map_err(|e| format!("from: {e}"))?;
    let to: Address = need("to")?.parse().map_err(|e| format!("to: {e}"))?;
    Ok(TransactionRecord::new(timestamp, TokenId(token), Wei(value), from, to))
}

fn fetch_page(
    client: &reqwest::blocking::Client,
    cfg: &FetchConfig,
    page: u32,
) -> Result<Vec<TransactionRecord>, PageError> {
    let page_s = page.to_string();
    let size_s = cfg.page_size.to_string();
    let mut query = vec![
        ("module", "account"),
        ("action", "tokennfttx"),
        ("contractaddress", cfg.contract.as_str()),
        ("page", page_s.as_str()),
        ("offset", size_s.as_str()),
        ("sort", "asc"),
    ];
    if let Some(key) = &cfg.api_key {
        query.push(("apikey", key.as_str()));
    }
    let resp = client.get(&cfg.base_url).query(&query).send().map_err(|e| PageError::Other(e.to_string()))?;
    let status = resp.status();
    if status.as_u16() == 429 {
        let retry = resp
            .headers()
            .get(reqwest::header::RETRY_AFTER)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.trim().parse::<u64>().ok());
        return Err(PageError::Rate(retry));
    }
    if status.as_u16() == 401 || status.as_u16() == 403 {
        return Err(PageError::Auth(format!("HTTP {status}")));
    }
    if !status.is_success() {
        return Err(PageError::Other(format!("HTTP {status}")));
    }
    let text = resp.text().map_err(|e| PageError::Other(e.to_string()))?;
    let body: Value = serde_json::from_str(&text).map_err(|e| PageError::Other(format!("bad JSON: {e}")))?;
    let result = body.get("result").cloned().unwrap_or(Value::Null);
    match result {
        Value::Array(rows) => rows.iter().map(parse_row).collect::<Result<_, _>>().map_err(PageError::Other),
        Value::String(msg) => {
            let lower = msg.to_ascii_lowercase();
            let message = body.get("message").and_then(Value::as_str).unwrap_or_default();
            if lower.contains("api key") {
                Err(PageError::Auth(msg))
            } else if lower.contains("rate limit") {
                Err(PageError::Rate(None))
            } else if message.starts_with("No transactions found") {
                Ok(Vec::new())
            } else {
                Err(PageError::Other(msg))
            }
        }
        _ => Err(PageError::Other("response has no result".into())),
    }
}

/// Downloads every transfer event of `cfg.contract` into `cfg.out` as a
/// timestamp-sorted canonical CSV.
pub fn fetch_transactions(cfg: &FetchConfig) -> Result<FetchSummary, FetchError> {
    let cursor_path = sidecar(&cfg.out, ".cursor");
    let partial_path = sidecar(&cfg.out, ".partial");
    let client = reqwest::blocking::Client::builder()
        .timeout(cfg.timeout)
        .build()
        .map_err(|e| FetchError::PartialFetch { pages: 0, rows: 0, cursor: cursor_path.clone(), reason: e.to_string() })?;

    let resumed: Option<Cursor> = fs::read_to_string(&cursor_path)
        .ok()
        .and_then(|s| serde_json::from_str::<Cursor>(&s).ok())
        .filter(|c| c.contract.eq_ignore_ascii_case(&cfg.contract) && partial_path.is_file());
    let mut cursor = match &resumed {
        Some(c) => {
            let f = OpenOptions::new().write(true).open(&partial_path)?;
            f.set_len(c.partial_len)?;
            c.clone()
        }
        None => {
            let header = format!("{}\n", CSV_HEADER.join(","));
            write_atomic(&partial_path, header.as_bytes())?;
            Cursor { contract: cfg.contract.clone(), next_page: 1, rows: 0, partial_len: header.len() as u64 }
        }
    };
    let first_page = cursor.next_page;

    loop {
        let page = match fetch_page(&client, cfg, cursor.next_page) {
            Ok(rows) => rows,
            Err(e) => {
                let json = serde_json::to_vec(&cursor).expect("cursor serializes");
                write_atomic(&cursor_path, &json)?;
                return Err(match e {
                    PageError::Auth(msg) => FetchError::AuthFailed(msg),
                    PageError::Rate(retry_after) => FetchError::RateLimited { retry_after },
                    PageError::Other(reason) => FetchError::PartialFetch {
                        pages: cursor.next_page - 1,
                        rows: cursor.rows,
                        cursor: cursor_path,
                        reason,
                    },
                });
            }
        };
        let csv = write_canonical_csv(page.iter().cloned());
        let body = csv.split_once('\n').map_or("", |(_, rest)| rest);
        let mut f = OpenOptions::new().append(true).open(&partial_path)?;
        f.write_all(body.as_bytes())?;
        f.sync_all()?;
        cursor.partial_len += body.len() as u64;
        cursor.rows += page.len();
        cursor.next_page += 1;
        write_atomic(&cursor_path, &serde_json::to_vec(&cursor).expect("cursor serializes"))?;
        if page.len() < cfg.page_size as usize {
            break;
        }
    }

    let raw = fs::read(&partial_path)?;
    let parsed = parse_transactions(&raw, InputFormat::Csv, ParseMode::Lenient).map_err(|e| FetchError::PartialFetch {
        pages: cursor.next_page - 1,
        rows: cursor.rows,
        cursor: cursor_path.clone(),
        reason: e.to_string(),
    })?;
    for err in &parsed.errors {
        log::warn!("dropping explorer row: {err}");
    }
    let mut records = parsed.records;
    records.sort_by_key(|r| r.timestamp);
    let rows = records.len();
    write_atomic(&cfg.out, write_canonical_csv(records).as_bytes())?;
    let _ = fs::remove_file(&partial_path);
    let _ = fs::remove_file(&cursor_path);
    Ok(FetchSummary {
        rows,
        pages: cursor.next_page - 1,
        resumed_from_page: resumed.map(|_| first_page),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_map_onto_records() {
        let row = serde_json::json!({
            "timeStamp": "1650000000", "tokenID": "42", "value": "1500000000000000000",
            "from": "0x0000000000000000000000000000000000000000",
            "to": "0x00000000000000000000000000000000000000aa", "hash": "0x1"
        });
        let r = parse_row(&row).unwrap();
        assert_eq!((r.timestamp, r.token_id, r.value.to_ether_string()), (1_650_000_000, TokenId(42), "1.5".to_string()));
        let no_value = serde_json::json!({"timeStamp": 1, "tokenID": 2, "from": "0x0000000000000000000000000000000000000001", "to": "0x0000000000000000000000000000000000000002"});
        assert!(parse_row(&no_value).unwrap().value.is_zero());
    }

    #[test]
    fn sidecars_sit_next_to_the_output() {
        assert_eq!(sidecar(Path::new("/tmp/x.csv"), ".cursor"), PathBuf::from("/tmp/x.csv.cursor"));
    }
}
