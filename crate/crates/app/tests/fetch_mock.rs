use std::collections::HashMap;
use std::net::TcpListener;
use std::sync::{Arc, Mutex};

use axum::extract::{Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use nftdisk::fetch::{fetch_transactions, FetchConfig, FetchError};
use nftdisk_core::{parse_transactions, InputFormat, ParseMode};
use serde_json::{json, Value};

const CONTRACT: &str = "0x00000000000000000000000000000000000000c0";

#[derive(Default)]
struct Mock {
    pages: Vec<Vec<Value>>,
    /// Pages that answer 500 once before succeeding.
    fail_once: Vec<u32>,
    /// Fixed response for every request.
    canned: Option<(u16, HeaderMap, Value)>,
    requests: Vec<HashMap<String, String>>,
}

async fn handler(State(mock): State<Arc<Mutex<Mock>>>, Query(q): Query<HashMap<String, String>>) -> Response {
    let mut m = mock.lock().unwrap();
    m.requests.push(q.clone());
    if let Some((status, headers, body)) = m.canned.clone() {
        return (StatusCode::from_u16(status).unwrap(), headers, Json(body)).into_response();
    }
    let page: u32 = q["page"].parse().unwrap();
    if let Some(i) = m.fail_once.iter().position(|p| *p == page) {
        m.fail_once.remove(i);
        return StatusCode::INTERNAL_SERVER_ERROR.into_response();
    }
    match m.pages.get(page as usize - 1) {
        Some(rows) => Json(json!({"status": "1", "message": "OK", "result": rows})).into_response(),
        None => Json(json!({"status": "0", "message": "No transactions found", "result": []})).into_response(),
    }
}

fn start(mock: Mock) -> (String, Arc<Mutex<Mock>>) {
    let state = Arc::new(Mutex::new(mock));
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    listener.set_nonblocking(true).unwrap();
    let url = format!("http://{}/api", listener.local_addr().unwrap());
    let app = Router::new().route("/api", get(handler)).with_state(state.clone());
    std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_current_thread().enable_all().build().unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::from_std(listener).unwrap();
            axum::serve(listener, app).await.unwrap();
        });
    });
    (url, state)
}

fn row(ts: u64, token: u32, from: u8, to: u8, value: &str) -> Value {
    json!({
        "blockNumber": "1", "timeStamp": ts.to_string(), "hash": format!("0x{ts:x}"),
        "from": format!("0x{:040x}", from), "to": format!("0x{:040x}", to),
        "contractAddress": CONTRACT, "tokenID": token.to_string(), "value": value,
        "tokenName": "Mock", "tokenSymbol": "MCK"
    })
}

fn two_pages() -> Vec<Vec<Value>> {
    // Timestamps deliberately out of order across and within pages.
    vec![
        vec![row(1_650_000_500, 1, 0, 1, "0"), row(1_650_000_100, 2, 0, 2, "0"), row(1_650_000_900, 1, 1, 3, "1000")],
        vec![row(1_650_000_300, 2, 2, 4, "5"), row(1_650_000_200, 3, 0, 5, "0"), row(1_650_000_700, 3, 5, 6, "0")],
    ]
}

fn config(url: &str, dir: &std::path::Path) -> FetchConfig {
    let mut cfg = FetchConfig::new(url, CONTRACT, dir.join("out.csv"));
    cfg.page_size = 3;
    cfg
}

fn timestamps(path: &std::path::Path) -> Vec<u64> {
    let bytes = std::fs::read(path).unwrap();
    let parsed = parse_transactions(&bytes, InputFormat::Csv, ParseMode::Strict).unwrap();
    parsed.records.iter().map(|r| r.timestamp).collect()
}

#[test]
fn two_pages_of_three_give_six_sorted_rows() {
    let (url, state) = start(Mock { pages: two_pages(), ..Mock::default() });
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(&url, dir.path());
    cfg.api_key = Some("secret".into());
    let summary = fetch_transactions(&cfg).unwrap();
    assert_eq!(summary.rows, 6);
    assert_eq!(summary.resumed_from_page, None);
    let ts = timestamps(&cfg.out);
    assert_eq!(ts, [1_650_000_100, 1_650_000_200, 1_650_000_300, 1_650_000_500, 1_650_000_700, 1_650_000_900]);
    let requests = &state.lock().unwrap().requests;
    assert_eq!(requests[0]["apikey"], "secret");
    assert_eq!(requests[0]["action"], "tokennfttx");
    assert_eq!(requests[0]["contractaddress"], CONTRACT);
    assert!(!dir.path().join("out.csv.cursor").exists());
    assert!(!dir.path().join("out.csv.partial").exists());
}

#[test]
fn values_come_through_as_wei() {
    let (url, _) = start(Mock { pages: two_pages(), ..Mock::default() });
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(&url, dir.path());
    fetch_transactions(&cfg).unwrap();
    let parsed = parse_transactions(&std::fs::read(&cfg.out).unwrap(), InputFormat::Csv, ParseMode::Strict).unwrap();
    let last = parsed.records.last().unwrap();
    assert_eq!(last.value.0, 1000);
}

#[test]
fn http_429_surfaces_retry_after() {
    let mut headers = HeaderMap::new();
    headers.insert("retry-after", "30".parse().unwrap());
    let (url, _) = start(Mock { canned: Some((429, headers, json!({}))), ..Mock::default() });
    let dir = tempfile::tempdir().unwrap();
    let err = fetch_transactions(&config(&url, dir.path())).unwrap_err();
    assert!(matches!(err, FetchError::RateLimited { retry_after: Some(30) }), "{err:?}");
}

#[test]
fn rate_limit_message_without_header() {
    let body = json!({"status": "0", "message": "NOTOK", "result": "Max rate limit reached"});
    let (url, _) = start(Mock { canned: Some((200, HeaderMap::new(), body)), ..Mock::default() });
    let dir = tempfile::tempdir().unwrap();
    let err = fetch_transactions(&config(&url, dir.path())).unwrap_err();
    assert!(matches!(err, FetchError::RateLimited { retry_after: None }), "{err:?}");
}

#[test]
fn bad_credentials_are_auth_failures() {
    let body = json!({"status": "0", "message": "NOTOK", "result": "Invalid API Key"});
    let (url, _) = start(Mock { canned: Some((200, HeaderMap::new(), body)), ..Mock::default() });
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(fetch_transactions(&config(&url, dir.path())), Err(FetchError::AuthFailed(_))));

    let (url, _) = start(Mock { canned: Some((401, HeaderMap::new(), json!({}))), ..Mock::default() });
    assert!(matches!(fetch_transactions(&config(&url, dir.path())), Err(FetchError::AuthFailed(_))));
}

#[test]
fn zero_event_contract_gives_header_only_csv() {
    let (url, _) = start(Mock::default());
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(&url, dir.path());
    let summary = fetch_transactions(&cfg).unwrap();
    assert_eq!(summary.rows, 0);
    let text = std::fs::read_to_string(&cfg.out).unwrap();
    assert_eq!(text.lines().count(), 1);
    assert!(text.starts_with("timestamp,"));
}

#[test]
fn failed_run_resumes_from_the_cursor() {
    let (url, state) = start(Mock { pages: two_pages(), fail_once: vec![2], ..Mock::default() });
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(&url, dir.path());
    let err = fetch_transactions(&cfg).unwrap_err();
    match err {
        FetchError::PartialFetch { pages, rows, cursor, .. } => {
            assert_eq!((pages, rows), (1, 3));
            assert!(cursor.exists());
        }
        other => panic!("expected PartialFetch, got {other:?}"),
    }
    assert!(!cfg.out.exists());

    let summary = fetch_transactions(&cfg).unwrap();
    assert_eq!(summary.resumed_from_page, Some(2));
    assert_eq!(summary.rows, 6);
    assert_eq!(timestamps(&cfg.out).len(), 6);
    let pages: Vec<String> = state.lock().unwrap().requests.iter().map(|q| q["page"].clone()).collect();
    assert_eq!(pages, ["1", "2", "2", "3"]);
}

#[test]
fn rerunning_a_finished_fetch_is_idempotent() {
    let (url, _) = start(Mock { pages: two_pages(), ..Mock::default() });
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(&url, dir.path());
    fetch_transactions(&cfg).unwrap();
    let first = std::fs::read(&cfg.out).unwrap();
    fetch_transactions(&cfg).unwrap();
    assert_eq!(std::fs::read(&cfg.out).unwrap(), first);
}
