//! Parsing and indexing of exported transaction logs.
//!
//! Two input formats are accepted: CSV with the header
//! `timestamp,token_id,value,from_address,to_address`, and a JSON array of
//! objects with the same keys. Values are ether decimals and are held as
//! integer wei from here on.

use std::collections::{BTreeMap, HashMap};
use std::ops::Range;

use serde::Serialize;
use serde_json::Value;
use thiserror::Error;

use crate::types::{
    Address, AddressId, Origin, TimeRange, TokenId, TransactionRecord, TxStatus, ValueError, Wei,
};

pub const CSV_HEADER: [&str; 5] = ["timestamp", "token_id", "value", "from_address", "to_address"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum InputFormat {
    Csv,
    Json,
}

impl std::str::FromStr for InputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(InputFormat::Csv),
            "json" => Ok(InputFormat::Json),
            other => Err(format!("unknown format {other:?} (expected csv or json)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ParseMode {
    /// Abort on the first bad row.
    Strict,
    /// Skip bad rows and report them alongside the parsed records.
    #[default]
    Lenient,
}

/// A problem with a single input row. `line` is the 1-based line number for
/// CSV input (the header is line 1) and the 1-based element position for
/// JSON input.
#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
pub enum RowError {
    #[error("line {line}: malformed row: {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error("line {line}: negative value {value:?}")]
    NegativeValue { line: u64, value: String },
    #[error("line {line}: bad address {value:?} (expected 0x + 40 hex chars)")]
    BadAddress { line: u64, value: String },
    #[error("line {line}: self-transaction from {address} to itself")]
    SelfTransaction { line: u64, address: String },
}

impl RowError {
    pub fn line(&self) -> u64 {
        match self {
            RowError::MalformedRow { line, .. }
            | RowError::NegativeValue { line, .. }
            | RowError::BadAddress { line, .. }
            | RowError::SelfTransaction { line, .. } => *line,
        }
    }
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("input is not valid UTF-8: {0}")]
    InvalidUtf8(#[from] std::str::Utf8Error),
    #[error("missing or invalid header: {0}")]
    BadHeader(String),
    #[error("JSON input must be an array of objects: {0}")]
    BadJson(String),
    #[error(transparent)]
    Row(#[from] RowError),
    #[error("no transactions to build a dataset from")]
    EmptyInput,
    #[error("inconsistent dataset: {0}")]
    Inconsistent(String),
}

/// Result of a parse run. In strict mode `errors` is always empty.
#[derive(Debug, Clone, Default)]
pub struct ParseOutput {
    pub records: Vec<TransactionRecord>,
    pub errors: Vec<RowError>,
}

/// Parses a CSV or JSON export into records, in input order.
pub fn parse_transactions(
    source: &[u8],
    format: InputFormat,
    mode: ParseMode,
) -> Result<ParseOutput, IngestError> {
    let text = std::str::from_utf8(source)?;
    let mut out = ParseOutput::default();
    let mut sink = |line: u64, row: Result<TransactionRecord, RowError>| -> Result<(), IngestError> {
        match row.and_then(|r| reject_self_transaction(line, r)) {
            Ok(r) => out.records.push(r),
            Err(e) if mode == ParseMode::Strict => return Err(e.into()),
            Err(e) => {
                log::warn!("skipping row: {e}");
                out.errors.push(e);
            }
        }
        Ok(())
    };
    match format {
        InputFormat::Csv => parse_csv(text, &mut sink)?,
        InputFormat::Json => parse_json(text, &mut sink)?,
    }
    Ok(out)
}

fn reject_self_transaction(line: u64, r: TransactionRecord) -> Result<TransactionRecord, RowError> {
    if r.from_address == r.to_address {
        return Err(RowError::SelfTransaction { line, address: r.from_address.to_hex() });
    }
    Ok(r)
}

fn parse_csv(
    text: &str,
    sink: &mut impl FnMut(u64, Result<TransactionRecord, RowError>) -> Result<(), IngestError>,
) -> Result<(), IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| IngestError::BadHeader(e.to_string()))?
        .clone();
    let mut columns = [usize::MAX; 5];
    for (slot, name) in columns.iter_mut().zip(CSV_HEADER) {
        *slot = headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| IngestError::BadHeader(format!("missing column {name:?}")))?;
    }
    for result in reader.records() {
        let (line, row) = match result {
            Ok(rec) => {
                let line = rec.position().map(|p| p.line()).unwrap_or(0);
                if rec.iter().all(|f| f.is_empty()) {
                    continue;
                }
                let fields: Option<Vec<&str>> = columns.iter().map(|&c| rec.get(c)).collect();
                let row = match fields {
                    Some(f) if rec.len() == headers.len() => {
                        parse_fields(line, f[0], f[1], f[2], f[3], f[4])
                    }
                    _ => Err(RowError::MalformedRow {
                        line,
                        reason: format!("expected {} fields, found {}", headers.len(), rec.len()),
                    }),
                };
                (line, row)
            }
            Err(e) => {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                (line, Err(RowError::MalformedRow { line, reason: e.to_string() }))
            }
        };
        sink(line, row)?;
    }
    Ok(())
}

fn parse_json(
    text: &str,
    sink: &mut impl FnMut(u64, Result<TransactionRecord, RowError>) -> Result<(), IngestError>,
) -> Result<(), IngestError> {
    let root: Value = serde_json::from_str(text).map_err(|e| IngestError::BadJson(e.to_string()))?;
    let items = match root {
        Value::Array(items) => items,
        _ => return Err(IngestError::BadJson("top-level value is not an array".into())),
    };
    for (i, item) in items.iter().enumerate() {
        let line = i as u64 + 1;
        sink(line, json_row(line, item))?;
    }
    Ok(())
}

fn json_row(line: u64, item: &Value) -> Result<TransactionRecord, RowError> {
    let obj = item.as_object().ok_or_else(|| RowError::MalformedRow {
        line,
        reason: "element is not an object".into(),
    })?;
    let mut fields = Vec::with_capacity(5);
    for key in CSV_HEADER {
        let text = match obj.get(key) {
            Some(Value::String(s)) => s.clone(),
            Some(Value::Number(n)) => n.to_string(),
            Some(other) => {
                return Err(RowError::MalformedRow {
                    line,
                    reason: format!("field {key:?} has unsupported type: {other}"),
                })
            }
            None => {
                return Err(RowError::MalformedRow { line, reason: format!("missing field {key:?}") })
            }
        };
        fields.push(text);
    }
    parse_fields(line, &fields[0], &fields[1], &fields[2], &fields[3], &fields[4])
}

fn parse_fields(
    line: u64,
    timestamp: &str,
    token_id: &str,
    value: &str,
    from: &str,
    to: &str,
) -> Result<TransactionRecord, RowError> {
    let malformed = |reason: String| RowError::MalformedRow { line, reason };
    let timestamp: u64 = timestamp
        .trim()
        .parse()
        .map_err(|_| malformed(format!("timestamp {timestamp:?} is not a non-negative integer")))?;
    let token_id: u128 = token_id
        .trim()
        .parse()
        .map_err(|_| malformed(format!("token_id {token_id:?} is not a non-negative integer")))?;
    let value = Wei::from_ether_str(value).map_err(|e| match e {
        ValueError::Negative(v) => RowError::NegativeValue { line, value: v },
        other => malformed(other.to_string()),
    })?;
    let from: Address = from
        .parse()
        .map_err(|_| RowError::BadAddress { line, value: from.to_string() })?;
    let to: Address = to
        .parse()
        .map_err(|_| RowError::BadAddress { line, value: to.to_string() })?;
    Ok(TransactionRecord::new(timestamp, TokenId(token_id), value, from, to))
}

/// A transaction with both parties interned into the dataset's address table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Transaction {
    pub timestamp: u64,
    pub token_id: TokenId,
    pub value: Wei,
    pub status: TxStatus,
    pub from: AddressId,
    pub to: AddressId,
    pub origin: Origin,
}

/// Immutable, time-sorted, indexed transaction store for one collection.
#[derive(Debug, Clone, PartialEq)]
pub struct CollectionDataset {
    collection_id: String,
    transactions: Vec<Transaction>,
    addresses: Vec<Address>,
    address_lookup: HashMap<Address, AddressId>,
    token_index: BTreeMap<TokenId, Vec<usize>>,
    time_extent: TimeRange,
}

/// Sorts records by timestamp (stable) and interns addresses in order of
/// first appearance in the sorted log, sender before receiver.
pub fn build_dataset(
    records: Vec<TransactionRecord>,
    collection_id: &str,
) -> Result<CollectionDataset, IngestError> {
    if records.is_empty() {
        return Err(IngestError::EmptyInput);
    }
    let mut records = records;
    records.sort_by_key(|r| r.timestamp);

    let mut addresses = Vec::new();
    let mut lookup: HashMap<Address, AddressId> = HashMap::new();
    let mut intern = |a: Address| -> AddressId {
        *lookup.entry(a).or_insert_with(|| {
            addresses.push(a);
            AddressId((addresses.len() - 1) as u32)
        })
    };
    let transactions: Vec<Transaction> = records
        .iter()
        .map(|r| Transaction {
            timestamp: r.timestamp,
            token_id: r.token_id,
            value: r.value,
            status: r.status,
            from: intern(r.from_address),
            to: intern(r.to_address),
            origin: r.origin,
        })
        .collect();
    CollectionDataset::from_indexed(collection_id, addresses, transactions)
}

impl CollectionDataset {
    /// Assembles a dataset from an already interned address table and a
    /// timestamp-sorted transaction list, rebuilding the derived indexes.
    pub fn from_indexed(
        collection_id: &str,
        addresses: Vec<Address>,
        transactions: Vec<Transaction>,
    ) -> Result<CollectionDataset, IngestError> {
        let (first, last) = match (transactions.first(), transactions.last()) {
            (Some(f), Some(l)) => (f.timestamp, l.timestamp),
            _ => return Err(IngestError::EmptyInput),
        };
        if transactions.windows(2).any(|w| w[0].timestamp > w[1].timestamp) {
            return Err(IngestError::Inconsistent("transactions are not sorted by timestamp".into()));
        }
        let mut address_lookup = HashMap::with_capacity(addresses.len());
        for (i, a) in addresses.iter().enumerate() {
            if address_lookup.insert(*a, AddressId(i as u32)).is_some() {
                return Err(IngestError::Inconsistent(format!("duplicate address {a}")));
            }
        }
        let mut token_index: BTreeMap<TokenId, Vec<usize>> = BTreeMap::new();
        for (i, tx) in transactions.iter().enumerate() {
            if tx.from.index() >= addresses.len() || tx.to.index() >= addresses.len() {
                return Err(IngestError::Inconsistent(format!(
                    "transaction {i} references an address outside the table"
                )));
            }
            token_index.entry(tx.token_id).or_default().push(i);
        }
        Ok(CollectionDataset {
            collection_id: collection_id.to_string(),
            transactions,
            addresses,
            address_lookup,
            token_index,
            time_extent: TimeRange { start: first, end: last },
        })
    }

    pub fn collection_id(&self) -> &str {
        &self.collection_id
    }

    pub fn transactions(&self) -> &[Transaction] {
        &self.transactions
    }

    pub fn len(&self) -> usize {
        self.transactions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transactions.is_empty()
    }

    pub fn addresses(&self) -> &[Address] {
        &self.addresses
    }

    pub fn address(&self, id: AddressId) -> Address {
        self.addresses[id.index()]
    }

    pub fn address_id(&self, address: &Address) -> Option<AddressId> {
        self.address_lookup.get(address).copied()
    }

    /// Index of the all-zero (mint) sender, if any mint occurs.
    pub fn zero_address_id(&self) -> Option<AddressId> {
        self.address_id(&Address::ZERO)
    }

    pub fn token_index(&self) -> &BTreeMap<TokenId, Vec<usize>> {
        &self.token_index
    }

    pub fn time_extent(&self) -> TimeRange {
        self.time_extent
    }

    /// Positions of the transactions whose timestamp lies in `range`.
    pub fn range_indices(&self, range: &TimeRange) -> Range<usize> {
        let lo = self.transactions.partition_point(|t| t.timestamp < range.start);
        let hi = self.transactions.partition_point(|t| t.timestamp <= range.end);
        lo..hi.max(lo)
    }

    pub fn record(&self, index: usize) -> TransactionRecord {
        let tx = &self.transactions[index];
        TransactionRecord {
            timestamp: tx.timestamp,
            token_id: tx.token_id,
            value: tx.value,
            status: tx.status,
            from_address: self.address(tx.from),
            to_address: self.address(tx.to),
            origin: tx.origin,
        }
    }

    pub fn records(&self) -> impl Iterator<Item = TransactionRecord> + '_ {
        (0..self.transactions.len()).map(|i| self.record(i))
    }

    /// Serialises the dataset in the canonical CSV ingest format.
    pub fn to_canonical_csv(&self) -> String {
        write_canonical_csv(self.records())
    }
}

/// Renders records as canonical CSV (header plus one row per record).
pub fn write_canonical_csv(records: impl IntoIterator<Item = TransactionRecord>) -> String {
    let mut out = CSV_HEADER.join(",");
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.timestamp,
            r.token_id,
            r.value.to_ether_string(),
            r.from_address.to_hex(),
            r.to_address.to_hex()
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const A: &str = "0xaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaaa";
    const B: &str = "0xbbbbbbbbbbbbbbbbbbbbbbbbbbbbbbbbbbbbbbbb";
    const C: &str = "0xcccccccccccccccccccccccccccccccccccccccc";
    const ZERO: &str = "0x0000000000000000000000000000000000000000";

    fn csv(rows: &[&str]) -> Vec<u8> {
        let mut s = String::from("timestamp,token_id,value,from_address,to_address\n");
        for r in rows {
            s.push_str(r);
            s.push('\n');
        }
        s.into_bytes()
    }

    fn rec(t: u64, token: u128, from: &str, to: &str) -> TransactionRecord {
        TransactionRecord::new(t, TokenId(token), Wei::ZERO, from.parse().unwrap(), to.parse().unwrap())
    }

    #[test]
    fn zero_value_row_is_transfer() {
        let out = parse_transactions(
            &csv(&[&format!("1650000000,4171,0,{A},{B}")]),
            InputFormat::Csv,
            ParseMode::Strict,
        )
        .unwrap();
        assert_eq!(out.records.len(), 1);
        assert_eq!(out.records[0].status, TxStatus::Transfer);
        assert_eq!(out.records[0].token_id, TokenId(4171));
    }

    #[test]
    fn positive_value_row_is_sale() {
        let out = parse_transactions(
            &csv(&[&format!("1650000000,4171,1.5,{A},{B}")]),
            InputFormat::Csv,
            ParseMode::Strict,
        )
        .unwrap();
        assert_eq!(out.records[0].status, TxStatus::Sale);
        assert_eq!(out.records[0].value, Wei::from_ether_str("1.5").unwrap());
    }

    #[test]
    fn zero_sender_is_mint() {
        let out = parse_transactions(
            &csv(&[&format!("1650000000,1,0,{ZERO},{B}")]),
            InputFormat::Csv,
            ParseMode::Strict,
        )
        .unwrap();
        assert_eq!(out.records[0].origin, Origin::Mint);
    }

    #[test]
    fn rows_keep_input_order() {
        let out = parse_transactions(
            &csv(&[&format!("30,1,0,{A},{B}"), &format!("10,2,0,{A},{B}")]),
            InputFormat::Csv,
            ParseMode::Strict,
        )
        .unwrap();
        let ts: Vec<u64> = out.records.iter().map(|r| r.timestamp).collect();
        assert_eq!(ts, vec![30, 10]);
    }

    #[test]
    fn strict_mode_aborts_on_first_error() {
        let err = parse_transactions(
            &csv(&[&format!("10,1,0,{A},{B}"), &format!("11,1,-2,{A},{B}"), "x,y"]),
            InputFormat::Csv,
            ParseMode::Strict,
        )
        .unwrap_err();
        assert!(matches!(err, IngestError::Row(RowError::NegativeValue { line: 3, .. })));
    }

    #[test]
    fn lenient_mode_collects_errors() {
        let out = parse_transactions(
            &csv(&[
                &format!("10,1,0,{A},{B}"),
                &format!("11,1,-2,{A},{B}"),
                &format!("12,1,0,0x12,{B}"),
                "not,enough",
                &format!("13,1,0,{A},{A}"),
                &format!("abc,1,0,{A},{B}"),
                &format!("14,2,0.5,{B},{C}"),
            ]),
            InputFormat::Csv,
            ParseMode::Lenient,
        )
        .unwrap();
        assert_eq!(out.records.len(), 2);
        assert_eq!(out.errors.len(), 5);
        assert!(matches!(out.errors[0], RowError::NegativeValue { line: 3, .. }));
        assert!(matches!(out.errors[1], RowError::BadAddress { line: 4, .. }));
        assert!(matches!(out.errors[2], RowError::MalformedRow { line: 5, .. }));
        assert!(matches!(out.errors[3], RowError::SelfTransaction { line: 6, .. }));
        assert!(matches!(out.errors[4], RowError::MalformedRow { line: 7, .. }));
    }

    #[test]
    fn missing_header_column_is_rejected() {
        let err = parse_transactions(b"timestamp,token_id,value\n1,2,3\n", InputFormat::Csv, ParseMode::Lenient)
            .unwrap_err();
        assert!(matches!(err, IngestError::BadHeader(_)));
    }

    #[test]
    fn invalid_utf8_is_rejected() {
        let err = parse_transactions(&[0xff, 0xfe], InputFormat::Csv, ParseMode::Lenient).unwrap_err();
        assert!(matches!(err, IngestError::InvalidUtf8(_)));
    }

    #[test]
    fn json_input() {
        let doc = format!(
            r#"[{{"timestamp":1650000000,"token_id":4171,"value":"1.5","from_address":"{A}","to_address":"{B}"}},
                {{"timestamp":"1650000001","token_id":"7","value":0,"from_address":"{ZERO}","to_address":"{B}"}},
                {{"timestamp":1,"token_id":1,"value":"1"}}]"#
        );
        let out = parse_transactions(doc.as_bytes(), InputFormat::Json, ParseMode::Lenient).unwrap();
        assert_eq!(out.records.len(), 2);
        assert_eq!(out.records[0].status, TxStatus::Sale);
        assert_eq!(out.records[1].origin, Origin::Mint);
        assert_eq!(out.records[1].status, TxStatus::Transfer);
        assert!(matches!(out.errors[0], RowError::MalformedRow { line: 3, .. }));

        let err = parse_transactions(b"{}", InputFormat::Json, ParseMode::Lenient).unwrap_err();
        assert!(matches!(err, IngestError::BadJson(_)));
    }

    #[test]
    fn build_sorts_by_timestamp() {
        let ds = build_dataset(vec![rec(30, 1, A, B), rec(10, 2, A, B), rec(20, 3, A, B)], "c").unwrap();
        let ts: Vec<u64> = ds.transactions().iter().map(|t| t.timestamp).collect();
        assert_eq!(ts, vec![10, 20, 30]);
        assert_eq!(ds.time_extent(), TimeRange { start: 10, end: 30 });
    }

    #[test]
    fn build_ties_keep_input_order() {
        let ds = build_dataset(vec![rec(5, 9, A, B), rec(5, 8, B, C), rec(1, 7, C, A)], "c").unwrap();
        let tokens: Vec<u128> = ds.transactions().iter().map(|t| t.token_id.0).collect();
        assert_eq!(tokens, vec![7, 9, 8]);
    }

    #[test]
    fn build_interns_addresses() {
        let ds = build_dataset(vec![rec(1, 1, A, B), rec(2, 2, B, C)], "c").unwrap();
        assert_eq!(ds.addresses().len(), 3);
        assert_eq!(ds.address_id(&A.parse().unwrap()), Some(AddressId(0)));
        assert_eq!(ds.address_id(&C.parse().unwrap()), Some(AddressId(2)));
        assert_eq!(ds.zero_address_id(), None);
    }

    #[test]
    fn build_partitions_tokens() {
        let ds = build_dataset(vec![rec(1, 5, A, B), rec(2, 5, B, C), rec(3, 7, A, C)], "c").unwrap();
        let sizes: Vec<(u128, usize)> =
            ds.token_index().iter().map(|(k, v)| (k.0, v.len())).collect();
        assert_eq!(sizes, vec![(5, 2), (7, 1)]);
    }

    #[test]
    fn build_rejects_empty_input() {
        assert!(matches!(build_dataset(vec![], "c"), Err(IngestError::EmptyInput)));
    }

    #[test]
    fn range_indices_are_inclusive() {
        let ds = build_dataset(vec![rec(10, 1, A, B), rec(20, 2, A, B), rec(30, 3, A, B)], "c").unwrap();
        assert_eq!(ds.range_indices(&TimeRange { start: 10, end: 20 }), 0..2);
        assert_eq!(ds.range_indices(&TimeRange { start: 11, end: 19 }), 1..1);
        assert_eq!(ds.range_indices(&TimeRange { start: 0, end: 100 }), 0..3);
    }
}
